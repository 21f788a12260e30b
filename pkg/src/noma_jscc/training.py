"""Loss functions, the mini-batch training loop, and curriculum training.

One training *task* selects the transmission pipeline used for both the
gradient steps and validation:

* ``"mac"`` -- superposed transmission of image pairs (the main task);
* ``"orthogonal"`` -- the interference-free curriculum phase, same pairs,
  same loss, each latent meeting the noise alone;
* ``"p2p"`` -- classical single-user training on individual images for the
  time-division baseline.

Each training instance draws its own channel SNR uniformly from the
configured range; the noise variance follows from the SNR and the power
budget.  Early stopping halts after ``patience`` consecutive epochs without
validation improvement and the best-validation parameters are returned.

Validation PSNR is computed on the fixed validation pairs at a fixed probe
SNR grid with a fixed noise seed, so the stopping criterion is
deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from . import pipeline
from ._util import atomic_write_text, derive_seed
from .data import ImageStore, PairDataset, iter_image_batches, iter_pair_batches
from .evaluation import psnr_per_image
from .model import PointToPointModel, TwoUserModel

TASKS = ("mac", "orthogonal", "p2p")


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    batch_size: int = 64
    patience: int = 10
    snr_range: tuple[float, float] = (0.0, 20.0)
    p_avg: float = 0.5
    seed: int = 0
    max_epochs: int | None = None
    val_probe_snrs: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0)
    reset_optimizer_between_phases: bool = True

    def __post_init__(self):
        if self.snr_range[0] > self.snr_range[1]:
            raise ValueError(f"snr_range low > high: {self.snr_range}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.patience < 1:
            raise ValueError(f"patience must be >= 1, got {self.patience}")
        if self.p_avg <= 0:
            raise ValueError(f"p_avg must be positive, got {self.p_avg}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")


@dataclass
class TrainState:
    """Progress bookkeeping across epochs; best PSNR never decreases."""

    epoch: int = 0
    best_val_psnr: float = -math.inf
    best_epoch: int = 0
    epochs_without_improvement: int = 0


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_psnr: float


@dataclass
class TrainResult:
    best_state: dict
    history: list[EpochRecord]
    best_val_psnr: float
    best_epoch: int
    stopped_early: bool


@dataclass
class CurriculumResult:
    phase1: TrainResult
    phase2: TrainResult
    handoff_val_psnr: float  # phase-1 parameters scored on the superposed task


def mse(x: torch.Tensor, x_hat: torch.Tensor) -> torch.Tensor:
    """Mean squared error over every element of the tensors."""
    if x.shape != x_hat.shape:
        raise ValueError(f"shape mismatch: {tuple(x.shape)} vs {tuple(x_hat.shape)}")
    return ((x - x_hat) ** 2).mean()


def pair_loss(
    x1: torch.Tensor,
    x2: torch.Tensor,
    xh1: torch.Tensor,
    xh2: torch.Tensor,
) -> torch.Tensor:
    """Sum of both devices' reconstruction MSEs."""
    return mse(x1, xh1) + mse(x2, xh2)


def draw_snr(batch: int, snr_range: tuple[float, float], rng: torch.Generator) -> torch.Tensor:
    """Per-instance channel SNRs, iid uniform over ``snr_range`` in dB."""
    lo, hi = snr_range
    return torch.rand(batch, generator=rng) * (hi - lo) + lo


def train_step(
    model,
    optimizer: torch.optim.Optimizer,
    batch,
    cfg: TrainConfig,
    snr_rng: torch.Generator,
    noise_rng: torch.Generator,
    task: str = "mac",
) -> float:
    """One optimizer update on a batch; returns the batch loss."""
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    model.train()
    if task == "p2p":
        x = batch
        snr = draw_snr(x.shape[0], cfg.snr_range, snr_rng)
        xh = pipeline.p2p_forward(model, x, snr, cfg.p_avg, noise_rng)
        loss = mse(x, xh)
    else:
        x1, x2 = batch
        snr = draw_snr(x1.shape[0], cfg.snr_range, snr_rng)
        forward = pipeline.mac_forward if task == "mac" else pipeline.orthogonal_forward
        xh1, xh2 = forward(model, x1, x2, snr, cfg.p_avg, noise_rng)
        loss = pair_loss(x1, x2, xh1, xh2)
    optimizer.zero_grad()
    loss.backward()
    optimizer.step()
    return float(loss.detach())


def validation_psnr(
    model,
    store: ImageStore,
    val_pairs: PairDataset,
    cfg: TrainConfig,
    task: str = "mac",
    seed: int | None = None,
) -> float:
    """Mean PSNR over both devices, all validation pairs, and the probe SNRs.

    Noise generators are reseeded identically on every call, so the value
    is a deterministic function of the parameters and the validation set.
    """
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    seed = cfg.seed if seed is None else seed
    model.eval()
    per_probe = []
    with torch.no_grad():
        for probe in cfg.val_probe_snrs:
            g = torch.Generator()
            g.manual_seed(derive_seed(seed, f"val-snr:{probe:g}"))
            scores = []
            for x1, x2 in iter_pair_batches(store, val_pairs, cfg.batch_size):
                if task == "mac":
                    xh1, xh2 = pipeline.mac_forward(model, x1, x2, float(probe), cfg.p_avg, g)
                elif task == "orthogonal":
                    xh1, xh2 = pipeline.orthogonal_forward(
                        model, x1, x2, float(probe), cfg.p_avg, g
                    )
                else:
                    xh1 = pipeline.p2p_forward(model, x1, float(probe), cfg.p_avg, g)
                    xh2 = pipeline.p2p_forward(model, x2, float(probe), cfg.p_avg, g)
                scores.append(psnr_per_image(x1, xh1))
                scores.append(psnr_per_image(x2, xh2))
            per_probe.append(float(np.concatenate(scores).mean()))
    return float(np.mean(per_probe))


def _snapshot(model) -> dict:
    return {k: v.detach().clone() for k, v in model.state_dict().items()}


def train(
    model,
    store: ImageStore,
    train_pairs: PairDataset,
    val_pairs: PairDataset,
    cfg: TrainConfig,
    task: str = "mac",
    seed: int | None = None,
    optimizer: torch.optim.Optimizer | None = None,
    on_epoch=None,
) -> TrainResult:
    """Run epochs until validation PSNR stalls for ``patience`` epochs.

    For the ``"p2p"`` task the training set is the multiset of images
    appearing in ``train_pairs`` (each instance transmitted alone); the
    pair structure is kept for validation so device columns stay
    comparable across methods.

    ``on_epoch(record, improved, model)`` is invoked after each epoch, for
    history/checkpoint writing by callers.
    """
    if task not in TASKS:
        raise ValueError(f"unknown task {task!r}")
    if len(train_pairs) == 0 or len(val_pairs) == 0:
        raise ValueError("training and validation sets must be non-empty")
    seed = cfg.seed if seed is None else seed
    if optimizer is None:
        optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    shuffle_rng = np.random.default_rng(derive_seed(seed, "shuffle"))
    snr_rng = torch.Generator()
    snr_rng.manual_seed(derive_seed(seed, "snr"))
    noise_rng = torch.Generator()
    noise_rng.manual_seed(derive_seed(seed, "noise"))

    state = TrainState()
    history: list[EpochRecord] = []
    best_state = _snapshot(model)
    stopped_early = False
    while True:
        state.epoch += 1
        epoch_pairs = train_pairs.shuffled(shuffle_rng)
        losses = []
        if task == "p2p":
            images = shuffle_rng.permutation(epoch_pairs.pairs.reshape(-1))
            batches = iter_image_batches(store, images, cfg.batch_size)
        else:
            batches = iter_pair_batches(store, epoch_pairs, cfg.batch_size)
        for batch in batches:
            losses.append(
                train_step(model, optimizer, batch, cfg, snr_rng, noise_rng, task)
            )
        val = validation_psnr(model, store, val_pairs, cfg, task, seed=seed)
        record = EpochRecord(state.epoch, float(np.mean(losses)), val)
        history.append(record)
        improved = val > state.best_val_psnr
        if improved:
            state.best_val_psnr = val
            state.best_epoch = state.epoch
            state.epochs_without_improvement = 0
            best_state = _snapshot(model)
        else:
            state.epochs_without_improvement += 1
        if on_epoch is not None:
            on_epoch(record, improved, model)
        if state.epochs_without_improvement >= cfg.patience:
            stopped_early = True
            break
        if cfg.max_epochs is not None and state.epoch >= cfg.max_epochs:
            break
    return TrainResult(
        best_state=best_state,
        history=history,
        best_val_psnr=state.best_val_psnr,
        best_epoch=state.best_epoch,
        stopped_early=stopped_early,
    )


def train_curriculum(
    model: TwoUserModel,
    store: ImageStore,
    train_pairs: PairDataset,
    val_pairs: PairDataset,
    cfg: TrainConfig,
    on_epoch_phase1=None,
    on_epoch_phase2=None,
) -> CurriculumResult:
    """Two-phase schedule: interference-free warm-up, then superposed training.

    Phase 1 trains on non-superposed transmissions with the same loss,
    power constraint, SNR distribution, and stopping rule; its best
    parameters double as the ideal-interference-removal baseline.  Phase 2
    resumes from those parameters on the superposed task, by default with a
    freshly initialized optimizer.  Nothing else changes between phases.
    """
    optimizer1 = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    phase1 = train(
        model,
        store,
        train_pairs,
        val_pairs,
        cfg,
        task="orthogonal",
        seed=derive_seed(cfg.seed, "phase1"),
        optimizer=optimizer1,
        on_epoch=on_epoch_phase1,
    )
    model.load_state_dict(phase1.best_state)
    handoff = validation_psnr(
        model, store, val_pairs, cfg, task="mac", seed=derive_seed(cfg.seed, "phase2")
    )
    phase2 = train(
        model,
        store,
        train_pairs,
        val_pairs,
        cfg,
        task="mac",
        seed=derive_seed(cfg.seed, "phase2"),
        optimizer=None if cfg.reset_optimizer_between_phases else optimizer1,
        on_epoch=on_epoch_phase2,
    )
    return CurriculumResult(phase1=phase1, phase2=phase2, handoff_val_psnr=handoff)


def write_history_csv(path: str, history: list[EpochRecord]) -> None:
    """Per-epoch history: ``epoch,train_loss,val_psnr``."""
    lines = ["epoch,train_loss,val_psnr"]
    for rec in history:
        lines.append(f"{rec.epoch},{rec.train_loss:.8f},{rec.val_psnr:.6f}")
    atomic_write_text(path, "\n".join(lines) + "\n")
