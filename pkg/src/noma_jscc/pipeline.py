"""End-to-end transmission pipelines combining models and the channel.

Each function runs augment -> encode -> power normalization -> channel ->
decode for one batch.  The per-instance SNR may be a scalar or a length-B
tensor; the noise variance is derived from it and the power budget.  Within
a pair both users always share a single noise realization.
"""

from __future__ import annotations

import torch

from .channel import (
    normalize_power,
    reals_to_complex,
    sample_noise,
    snr_to_noise_variance,
    transmit_mac,
    transmit_p2p,
)
from .model import PointToPointModel, TwoUserModel


def _snr_tensor(snr_db, batch: int) -> torch.Tensor:
    snr = torch.as_tensor(snr_db, dtype=torch.float32)
    if snr.dim() == 0:
        snr = snr.expand(batch)
    return snr


def encode_normalized(
    model: TwoUserModel, x: torch.Tensor, device_index: int, snr_db, p_avg: float
) -> torch.Tensor:
    """Power-normalized complex latent for one device."""
    z = reals_to_complex(model.encode(x, device_index, snr_db))
    return normalize_power(z, p_avg)


def mac_forward(
    model: TwoUserModel,
    x1: torch.Tensor,
    x2: torch.Tensor,
    snr_db,
    p_avg: float,
    noise_rng: torch.Generator,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Superposed transmission of a pair; returns both reconstructions."""
    snr = _snr_tensor(snr_db, x1.shape[0])
    var = snr_to_noise_variance(snr, p_avg)
    z1 = encode_normalized(model, x1, 1, snr, p_avg)
    z2 = encode_normalized(model, x2, 2, snr, p_avg)
    y = transmit_mac(z1, z2, var, noise_rng)
    out = model.decode(y, snr)
    return out[:, 0], out[:, 1]


def orthogonal_forward(
    model: TwoUserModel,
    x1: torch.Tensor,
    x2: torch.Tensor,
    snr_db,
    p_avg: float,
    noise_rng: torch.Generator,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Interference-free variant: each latent meets the noise alone.

    One noise vector is drawn per pair and reused for both users, mirroring
    the superposed pipeline's single draw.  Device i's reconstruction is
    read from decoder slot i.
    """
    snr = _snr_tensor(snr_db, x1.shape[0])
    var = snr_to_noise_variance(snr, p_avg)
    z1 = encode_normalized(model, x1, 1, snr, p_avg)
    z2 = encode_normalized(model, x2, 2, snr, p_avg)
    n = sample_noise(z1.shape, var, noise_rng, dtype=z1.dtype)
    xh1 = model.decode(z1 + n, snr)[:, 0]
    xh2 = model.decode(z2 + n, snr)[:, 1]
    return xh1, xh2


def single_user_forward(
    model: TwoUserModel,
    x: torch.Tensor,
    device_index: int,
    snr_db,
    p_avg: float,
    noise_rng: torch.Generator,
) -> torch.Tensor:
    """One device alone on the full bandwidth (ideal interference removal)."""
    snr = _snr_tensor(snr_db, x.shape[0])
    var = snr_to_noise_variance(snr, p_avg)
    z = encode_normalized(model, x, device_index, snr, p_avg)
    y = transmit_p2p(z, var, noise_rng)
    return model.decode(y, snr)[:, device_index - 1]


def p2p_forward(
    model: PointToPointModel,
    x: torch.Tensor,
    snr_db,
    p_avg: float,
    noise_rng: torch.Generator,
) -> torch.Tensor:
    """Classical point-to-point transmission for the time-division baseline."""
    snr = _snr_tensor(snr_db, x.shape[0])
    var = snr_to_noise_variance(snr, p_avg)
    z = normalize_power(reals_to_complex(model.encode(x, snr)), p_avg)
    y = transmit_p2p(z, var, noise_rng)
    return model.decode(y, snr)
