"""Reconstruction metrics, SNR-sweep evaluation, and rate-region utilities.

Sweeps run the full transmission pipeline over fixed test pairs at each
SNR of a grid, with one model serving every SNR.  Noise generators are
derived from a root seed and the SNR value only, so different methods
evaluated with the same root seed see the same channel realizations
(paired comparison); pass distinct seeds for independent noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import torch

from . import pipeline
from ._util import atomic_write_text, derive_seed
from .data import ImageStore, PairDataset, iter_pair_batches
from .model import PointToPointModel, TwoUserModel

PSNR_CAP_DB = 100.0  # stand-in for infinite PSNR in aggregates


def mse(x, x_hat) -> float:
    """Mean squared error over all elements; independent of metric PSNR path."""
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {x_hat.shape}")
    return float(np.mean((x - x_hat) ** 2))


def psnr(x, x_hat, max_value: float = 1.0) -> float:
    """Peak signal-to-noise ratio 10*log10(A^2 / MSE) in dB.

    Identical inputs give +inf; aggregate helpers cap that at
    ``PSNR_CAP_DB``.  Scale-invariant: data in [0, 1] with A=1 scores the
    same as data in [0, 255] with A=255.
    """
    if max_value <= 0:
        raise ValueError(f"max_value must be positive, got {max_value}")
    err = mse(x, x_hat)
    if err == 0.0:
        return math.inf
    return 10.0 * math.log10(max_value**2 / err)


def psnr_per_image(x: torch.Tensor, x_hat: torch.Tensor, max_value: float = 1.0) -> np.ndarray:
    """Per-image PSNRs for a batch, with +inf capped at ``PSNR_CAP_DB``."""
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    diff = (x.detach().cpu().numpy().astype(np.float64)
            - x_hat.detach().cpu().numpy().astype(np.float64))
    errs = (diff**2).reshape(diff.shape[0], -1).mean(axis=1)
    out = np.full(errs.shape, PSNR_CAP_DB)
    nz = errs > 0
    out[nz] = np.minimum(10.0 * np.log10(max_value**2 / errs[nz]), PSNR_CAP_DB)
    return out


@dataclass(frozen=True)
class SweepRow:
    snr_db: float
    psnr_avg: float
    psnr_dev1: float
    psnr_dev2: float


@dataclass
class SweepResult:
    """Per-SNR PSNR table for one method at one bandwidth ratio."""

    method: str
    rho: Fraction
    rows: list[SweepRow]

    def __post_init__(self):
        snrs = [r.snr_db for r in self.rows]
        if any(b <= a for a, b in zip(snrs, snrs[1:])):
            raise ValueError(f"snr values must be strictly increasing, got {snrs}")
        for r in self.rows:
            if abs(r.psnr_avg - 0.5 * (r.psnr_dev1 + r.psnr_dev2)) > 1e-9:
                raise ValueError("psnr_avg must equal the mean of the device columns")

    def to_csv(self, path: str) -> None:
        lines = ["snr,psnr,psnr_dev1,psnr_dev2"]
        for r in self.rows:
            lines.append(
                f"{r.snr_db:g},{r.psnr_avg:.4f},{r.psnr_dev1:.4f},{r.psnr_dev2:.4f}"
            )
        atomic_write_text(path, "\n".join(lines) + "\n")


def _sweep_generator(seed: int, snr_db: float) -> torch.Generator:
    g = torch.Generator()
    g.manual_seed(derive_seed(seed, f"eval-snr:{snr_db:g}"))
    return g


def evaluate_sweep(
    model: TwoUserModel,
    store: ImageStore,
    pairs: PairDataset,
    snr_list,
    p_avg: float,
    seed: int,
    batch_size: int = 64,
    mode: str = "mac",
    method: str | None = None,
) -> SweepResult:
    """PSNR-vs-SNR sweep of the two-user model over fixed test pairs.

    ``mode`` selects superposed transmission (``"mac"``) or the
    interference-free bound (``"single_user"``) where each device uses the
    full bandwidth alone.
    """
    if mode not in ("mac", "single_user"):
        raise ValueError(f"unknown sweep mode {mode!r}")
    model.eval()
    rows = []
    for snr_db in snr_list:
        g = _sweep_generator(seed, snr_db)
        d1, d2 = [], []
        with torch.no_grad():
            for x1, x2 in iter_pair_batches(store, pairs, batch_size):
                if mode == "mac":
                    xh1, xh2 = pipeline.mac_forward(model, x1, x2, float(snr_db), p_avg, g)
                else:
                    xh1 = pipeline.single_user_forward(model, x1, 1, float(snr_db), p_avg, g)
                    xh2 = pipeline.single_user_forward(model, x2, 2, float(snr_db), p_avg, g)
                d1.append(psnr_per_image(x1, xh1))
                d2.append(psnr_per_image(x2, xh2))
        p1 = float(np.concatenate(d1).mean())
        p2 = float(np.concatenate(d2).mean())
        rows.append(SweepRow(float(snr_db), 0.5 * (p1 + p2), p1, p2))
    tag = method or ("single-user" if mode == "single_user" else "noma")
    return SweepResult(method=tag, rho=model.cfg.rho, rows=rows)


def evaluate_single_user(
    model: TwoUserModel,
    store: ImageStore,
    pairs: PairDataset,
    snr_list,
    p_avg: float,
    seed: int,
    batch_size: int = 64,
) -> SweepResult:
    """Interference-free upper-bound sweep (full bandwidth per device)."""
    return evaluate_sweep(
        model, store, pairs, snr_list, p_avg, seed, batch_size,
        mode="single_user", method="single-user",
    )


def evaluate_tdma(
    model: PointToPointModel,
    store: ImageStore,
    pairs: PairDataset,
    snr_list,
    p_avg: float,
    seed: int,
    batch_size: int = 64,
    power_mode: str = "per_symbol",
) -> SweepResult:
    """Time-division sweep: each device alone on half the channel symbols.

    ``power_mode`` "per_symbol" keeps the per-symbol budget at ``p_avg``;
    "energy_equalized" doubles it so each user spends the same total energy
    as in the non-orthogonal scheme.
    """
    if power_mode not in ("per_symbol", "energy_equalized"):
        raise ValueError(f"unknown power mode {power_mode!r}")
    symbol_power = p_avg if power_mode == "per_symbol" else 2.0 * p_avg
    model.eval()
    rows = []
    for snr_db in snr_list:
        g = _sweep_generator(seed, snr_db)
        d1, d2 = [], []
        with torch.no_grad():
            for x1, x2 in iter_pair_batches(store, pairs, batch_size):
                xh1 = pipeline.p2p_forward(model, x1, float(snr_db), symbol_power, g)
                xh2 = pipeline.p2p_forward(model, x2, float(snr_db), symbol_power, g)
                d1.append(psnr_per_image(x1, xh1))
                d2.append(psnr_per_image(x2, xh2))
        p1 = float(np.concatenate(d1).mean())
        p2 = float(np.concatenate(d2).mean())
        rows.append(SweepRow(float(snr_db), 0.5 * (p1 + p2), p1, p2))
    return SweepResult(method="tdma", rho=model.cfg.rho * 2, rows=rows)


def fairness_gap(result: SweepResult) -> list[tuple[float, float]]:
    """Per-SNR absolute PSNR gap between the two devices."""
    return [(r.snr_db, abs(r.psnr_dev1 - r.psnr_dev2)) for r in result.rows]


@dataclass(frozen=True)
class RatePoint:
    r1: float
    r2: float

    def __post_init__(self):
        if self.r1 < 0 or self.r2 < 0:
            raise ValueError(f"rates must be non-negative, got ({self.r1}, {self.r2})")


def _check_region_inputs(p1: float, p2: float, noise_variance: float) -> None:
    if p1 <= 0 or p2 <= 0 or noise_variance <= 0:
        raise ValueError(
            f"powers and noise variance must be positive, got "
            f"P1={p1}, P2={p2}, N={noise_variance}"
        )


def mac_capacity_region(
    p1: float, p2: float, noise_variance: float, grid: int = 32
) -> list[RatePoint]:
    """Boundary of the two-user Gaussian MAC capacity pentagon.

    The region is {R1 <= log2(1+P1/N), R2 <= log2(1+P2/N),
    R1+R2 <= log2(1+(P1+P2)/N)}.  Returned points trace the dominant
    boundary from (0, C2) through both corner points to (C1, 0), with
    ``grid`` points per segment.
    """
    _check_region_inputs(p1, p2, noise_variance)
    if grid < 2:
        raise ValueError(f"grid must be >= 2, got {grid}")
    c1 = math.log2(1.0 + p1 / noise_variance)
    c2 = math.log2(1.0 + p2 / noise_variance)
    c_sum = math.log2(1.0 + (p1 + p2) / noise_variance)
    corner_a = (c_sum - c2, c2)  # device 2 decoded last
    corner_b = (c1, c_sum - c1)  # device 1 decoded last
    segments = [((0.0, c2), corner_a), (corner_a, corner_b), (corner_b, (c1, 0.0))]
    points: list[RatePoint] = []
    for (x0, y0), (x1, y1) in segments:
        for s in np.linspace(0.0, 1.0, grid):
            pt = RatePoint(x0 + s * (x1 - x0), y0 + s * (y1 - y0))
            if points and points[-1] == pt:
                continue
            points.append(pt)
    return points


def tdma_rates(p1: float, p2: float, noise_variance: float, alphas) -> list[RatePoint]:
    """Rate pairs achievable by time sharing with per-symbol powers P1, P2."""
    _check_region_inputs(p1, p2, noise_variance)
    c1 = math.log2(1.0 + p1 / noise_variance)
    c2 = math.log2(1.0 + p2 / noise_variance)
    points = []
    for a in alphas:
        if not 0.0 <= a <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {a}")
        points.append(RatePoint(a * c1, (1.0 - a) * c2))
    return points


def point_in_capacity_region(
    point: RatePoint, p1: float, p2: float, noise_variance: float, tol: float = 1e-12
) -> bool:
    """Membership test against the pentagon's three face constraints."""
    _check_region_inputs(p1, p2, noise_variance)
    c1 = math.log2(1.0 + p1 / noise_variance)
    c2 = math.log2(1.0 + p2 / noise_variance)
    c_sum = math.log2(1.0 + (p1 + p2) / noise_variance)
    return (
        point.r1 <= c1 + tol
        and point.r2 <= c2 + tol
        and point.r1 + point.r2 <= c_sum + tol
    )
