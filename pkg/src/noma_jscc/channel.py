"""Complex AWGN multiple-access channel simulation.

All operations work on torch tensors so they can sit inside a training
graph, but they are equally usable as plain numerics.  Latent vectors are
complex-valued; a real tensor of even length is understood as the
interleaved (re, im) representation of k = n/2 complex symbols, so power
accounting is identical in either view.

Every stochastic operation takes an explicit ``torch.Generator``; there is
no hidden global randomness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch


class DegenerateLatentError(ValueError):
    """Raised when a latent vector has zero norm and cannot be power-scaled."""


def snr_to_noise_variance(snr_db: float, p_avg: float) -> float:
    """Noise variance per complex symbol for a given SNR in dB.

    SNR is defined as 10*log10(p_avg / sigma^2), so
    sigma^2 = p_avg / 10^(snr_db/10).
    """
    if p_avg <= 0:
        raise ValueError(f"p_avg must be positive, got {p_avg}")
    return p_avg / (10.0 ** (snr_db / 10.0))


def noise_variance_to_snr(noise_variance: float, p_avg: float) -> float:
    """Inverse of :func:`snr_to_noise_variance`."""
    if p_avg <= 0:
        raise ValueError(f"p_avg must be positive, got {p_avg}")
    if noise_variance <= 0:
        raise ValueError(f"noise_variance must be positive, got {noise_variance}")
    return 10.0 * math.log10(p_avg / noise_variance)


@dataclass(frozen=True)
class ChannelSpec:
    """Static channel operating point: SNR, power budget, noise variance."""

    snr_db: float
    p_avg: float
    noise_variance: float

    def __post_init__(self):
        if self.p_avg <= 0:
            raise ValueError(f"p_avg must be positive, got {self.p_avg}")
        if self.noise_variance <= 0:
            raise ValueError(
                f"noise_variance must be positive, got {self.noise_variance}"
            )

    @classmethod
    def from_snr(cls, snr_db: float, p_avg: float) -> "ChannelSpec":
        return cls(snr_db, p_avg, snr_to_noise_variance(snr_db, p_avg))


def _symbol_count(z: torch.Tensor) -> int:
    """Number of complex symbols along the last axis of ``z``."""
    n = z.shape[-1]
    if z.is_complex():
        return n
    if n % 2 != 0:
        raise ValueError(f"real latent must have even length, got {n}")
    return n // 2


def normalize_power(z: torch.Tensor, p_avg: float) -> torch.Tensor:
    """Scale ``z`` so its average per-symbol power equals ``p_avg``.

    Accepts complex latents of length k, or their real interleaved
    representation of length 2k; the scale sqrt(k * p_avg / ||z||^2) is the
    same in either view.  Batched inputs are normalized per row.
    """
    if p_avg <= 0:
        raise ValueError(f"p_avg must be positive, got {p_avg}")
    k = _symbol_count(z)
    if z.is_complex():
        sq_norm = (z.real**2 + z.imag**2).sum(dim=-1, keepdim=True)
    else:
        sq_norm = (z**2).sum(dim=-1, keepdim=True)
    if bool((sq_norm == 0).any()):
        raise DegenerateLatentError("cannot power-normalize an all-zero latent")
    return z * torch.sqrt(k * p_avg / sq_norm)


def reals_to_complex(v: torch.Tensor) -> torch.Tensor:
    """Pair consecutive reals (v[2j], v[2j+1]) into complex symbol j."""
    n = v.shape[-1]
    if n % 2 != 0:
        raise ValueError(f"real vector length must be even, got {n}")
    return torch.view_as_complex(v.reshape(*v.shape[:-1], n // 2, 2).contiguous())


def complex_to_reals(z: torch.Tensor) -> torch.Tensor:
    """Inverse of :func:`reals_to_complex`."""
    if not z.is_complex():
        raise ValueError("expected a complex tensor")
    r = torch.view_as_real(z)
    return r.reshape(*z.shape[:-1], 2 * z.shape[-1])


def _as_variance_tensor(
    noise_variance, like: torch.Tensor
) -> torch.Tensor:
    """Broadcastable per-row noise variance, validated non-negative."""
    real_dtype = torch.real(like).dtype if like.is_complex() else like.dtype
    var = torch.as_tensor(noise_variance, dtype=real_dtype)
    if bool((var < 0).any()):
        raise ValueError("noise_variance must be non-negative")
    if var.dim() == 1:
        var = var.unsqueeze(-1)
    return var


def sample_noise(
    shape,
    noise_variance,
    rng: torch.Generator,
    dtype: torch.dtype = torch.complex64,
) -> torch.Tensor:
    """Circularly-symmetric complex Gaussian noise.

    Per-symbol variance is ``noise_variance``; each real component carries
    half of it.  ``noise_variance`` may be a scalar or a length-B vector for
    batched shapes (B, k).
    """
    real_dtype = torch.empty(0, dtype=dtype).real.dtype
    comps = torch.randn(*shape, 2, generator=rng, dtype=real_dtype)
    n = torch.view_as_complex(comps)
    var = _as_variance_tensor(noise_variance, n)
    return n * torch.sqrt(var / 2.0)


def transmit_mac(
    z1: torch.Tensor,
    z2: torch.Tensor,
    noise_variance,
    rng: torch.Generator,
) -> torch.Tensor:
    """Superpose two latents on the channel: y = z1 + z2 + n."""
    if not (z1.is_complex() and z2.is_complex()):
        raise ValueError("transmit_mac expects complex latents")
    if z1.shape != z2.shape:
        raise ValueError(f"latent shapes differ: {tuple(z1.shape)} vs {tuple(z2.shape)}")
    n = sample_noise(z1.shape, noise_variance, rng, dtype=z1.dtype)
    return z1 + z2 + n


def transmit_p2p(
    z: torch.Tensor,
    noise_variance,
    rng: torch.Generator,
) -> torch.Tensor:
    """Single-transmitter channel: y = z + n."""
    if not z.is_complex():
        raise ValueError("transmit_p2p expects a complex latent")
    n = sample_noise(z.shape, noise_variance, rng, dtype=z.dtype)
    return z + n
