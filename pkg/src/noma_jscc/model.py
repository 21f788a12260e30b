"""Autoencoder models for image transmission over the two-user channel.

Two model families share the same backbone:

* :class:`TwoUserModel` -- a Siamese encoder (one parameter set used by both
  transmitters), per-device trainable embedding planes concatenated to the
  input, and a single decoder whose final layer emits both reconstructions.
* :class:`PointToPointModel` -- the classical single-user variant used for
  time-division baselines: no embedding channel, half the channel symbols,
  one reconstruction.

The backbone has two stride-2 downsampling stages, residual blocks with a
lightweight spatial attention gate, and SNR-conditioned channel gating so a
single model serves the whole test SNR range.
"""

from __future__ import annotations

import io
import json
from dataclasses import asdict, dataclass
from fractions import Fraction

import torch
import torch.nn as nn

from ._util import atomic_write_bytes
from .channel import complex_to_reals

DOWNSAMPLE_FACTOR = 4  # two stride-2 stages
SNR_SCALE_DB = 20.0  # training range [0, 20] dB maps to [0, 1]


@dataclass(frozen=True)
class ModelConfig:
    """Geometry of one autoencoder instance."""

    c_in: int
    width: int
    height: int
    filter_width: int
    rho: Fraction
    latent_channels: int
    k: int
    snr_conditioning: bool = True

    @classmethod
    def for_image(
        cls,
        rho: Fraction,
        c_in: int,
        width: int,
        height: int,
        filter_width: int,
        snr_conditioning: bool = True,
    ) -> "ModelConfig":
        """Resolve bandwidth ratio to integer symbol and channel counts."""
        rho = Fraction(rho)
        if c_in < 1:
            raise ValueError(f"c_in must be >= 1, got {c_in}")
        if width % DOWNSAMPLE_FACTOR or height % DOWNSAMPLE_FACTOR:
            raise ValueError(
                f"image dims must be divisible by {DOWNSAMPLE_FACTOR}, "
                f"got {width}x{height}"
            )
        k_exact = rho * c_in * width * height
        if k_exact.denominator != 1:
            raise ValueError(
                f"rho={rho} gives non-integer symbol count {k_exact} "
                f"for shape {c_in}x{width}x{height}"
            )
        k = int(k_exact)
        spatial = (width // DOWNSAMPLE_FACTOR) * (height // DOWNSAMPLE_FACTOR)
        if (2 * k) % spatial:
            raise ValueError(
                f"2k={2 * k} not divisible by latent spatial size {spatial}"
            )
        return cls(
            c_in=c_in,
            width=width,
            height=height,
            filter_width=filter_width,
            rho=rho,
            latent_channels=(2 * k) // spatial,
            k=k,
            snr_conditioning=snr_conditioning,
        )

    def half_bandwidth(self) -> "ModelConfig":
        """Config for the time-division variant (k/2 symbols per user)."""
        if self.latent_channels % 2:
            raise ValueError(
                f"latent_channels={self.latent_channels} not divisible by 2"
            )
        return ModelConfig(
            c_in=self.c_in,
            width=self.width,
            height=self.height,
            filter_width=self.filter_width,
            rho=self.rho / 2,
            latent_channels=self.latent_channels // 2,
            k=self.k // 2,
            snr_conditioning=self.snr_conditioning,
        )


def _snr_vector(snr_db, batch: int, ref: torch.Tensor) -> torch.Tensor:
    """Per-instance SNR column, broadcast from a scalar if needed."""
    snr = torch.as_tensor(snr_db, dtype=ref.dtype, device=ref.device)
    if snr.dim() == 0:
        snr = snr.expand(batch)
    return snr.reshape(batch, 1)


class AFModule(nn.Module):
    """Channel gate conditioned on pooled features and the channel SNR.

    Global-average-pooled features are concatenated with snr_db / 20 and
    mapped through a two-layer bottleneck to a sigmoid gate, so every gate
    value lies in (0, 1).
    """

    def __init__(self, channels: int):
        super().__init__()
        hidden = max(channels // 16, 4)
        self.fc1 = nn.Linear(channels + 1, hidden)
        self.fc2 = nn.Linear(hidden, channels)
        self.act = nn.PReLU()

    def forward(self, x: torch.Tensor, snr_db) -> torch.Tensor:
        pooled = x.mean(dim=(2, 3))
        snr = _snr_vector(snr_db, x.shape[0], pooled) / SNR_SCALE_DB
        gate = torch.sigmoid(self.fc2(self.act(self.fc1(torch.cat([pooled, snr], dim=1)))))
        return x * gate[:, :, None, None]


class SpatialGate(nn.Module):
    """Single-plane spatial attention: features scaled by a per-pixel gate."""

    def __init__(self, channels: int, reduction: int = 8):
        super().__init__()
        hidden = max(channels // reduction, 1)
        self.squeeze = nn.Conv2d(channels, hidden, kernel_size=1)
        self.act = nn.PReLU()
        self.expand = nn.Conv2d(hidden, 1, kernel_size=1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x * torch.sigmoid(self.expand(self.act(self.squeeze(x))))


class ResidualAttentionBlock(nn.Module):
    """Two 3x3 convolutions with a skip connection, then spatial gating."""

    def __init__(self, channels: int):
        super().__init__()
        self.conv1 = nn.Conv2d(channels, channels, kernel_size=3, padding=1)
        self.act = nn.PReLU()
        self.conv2 = nn.Conv2d(channels, channels, kernel_size=3, padding=1)
        self.gate = SpatialGate(channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        y = self.conv2(self.act(self.conv1(x))) + x
        return self.gate(y)


class Encoder(nn.Module):
    """Image (plus any extra planes) to a flat real latent of length 2k."""

    def __init__(self, in_channels: int, cfg: ModelConfig):
        super().__init__()
        f = cfg.filter_width
        self.cfg = cfg
        self.in_channels = in_channels
        self.down1 = nn.Conv2d(in_channels, f, kernel_size=3, stride=2, padding=1)
        self.res1 = ResidualAttentionBlock(f)
        self.af1 = AFModule(f)
        self.down2 = nn.Conv2d(f, f, kernel_size=3, stride=2, padding=1)
        self.res2 = ResidualAttentionBlock(f)
        self.af2 = AFModule(f)
        self.head = nn.Conv2d(f, cfg.latent_channels, kernel_size=1)

    def forward(self, x: torch.Tensor, snr_db) -> torch.Tensor:
        if x.shape[1:] != (self.in_channels, self.cfg.width, self.cfg.height):
            raise ValueError(
                f"expected input {self.in_channels}x{self.cfg.width}x"
                f"{self.cfg.height}, got {tuple(x.shape[1:])}"
            )
        x = self.down1(x)
        x = self.af1(self.res1(x), snr_db) if self.cfg.snr_conditioning else self.res1(x)
        x = self.down2(x)
        x = self.af2(self.res2(x), snr_db) if self.cfg.snr_conditioning else self.res2(x)
        return self.head(x).flatten(1)


class Decoder(nn.Module):
    """Received complex symbols back to one or two bounded-range images."""

    def __init__(self, n_slots: int, cfg: ModelConfig):
        super().__init__()
        f = cfg.filter_width
        self.cfg = cfg
        self.n_slots = n_slots
        self.head = nn.Conv2d(cfg.latent_channels, f, kernel_size=1)
        self.res1 = ResidualAttentionBlock(f)
        self.af1 = AFModule(f)
        self.up1 = nn.ConvTranspose2d(
            f, f, kernel_size=3, stride=2, padding=1, output_padding=1
        )
        self.res2 = ResidualAttentionBlock(f)
        self.af2 = AFModule(f)
        self.up2 = nn.ConvTranspose2d(
            f, f, kernel_size=3, stride=2, padding=1, output_padding=1
        )
        self.out = nn.Conv2d(f, n_slots * cfg.c_in, kernel_size=3, padding=1)

    def forward(self, y: torch.Tensor, snr_db) -> torch.Tensor:
        cfg = self.cfg
        if not y.is_complex():
            raise ValueError("decoder expects complex channel output")
        if y.shape[-1] != cfg.k:
            raise ValueError(f"expected {cfg.k} symbols, got {y.shape[-1]}")
        v = complex_to_reals(y)
        hw = (cfg.width // DOWNSAMPLE_FACTOR, cfg.height // DOWNSAMPLE_FACTOR)
        x = v.reshape(v.shape[0], cfg.latent_channels, *hw)
        x = self.head(x)
        x = self.af1(self.res1(x), snr_db) if cfg.snr_conditioning else self.res1(x)
        x = self.up1(x)
        x = self.af2(self.res2(x), snr_db) if cfg.snr_conditioning else self.res2(x)
        x = self.up2(x)
        x = torch.sigmoid(self.out(x))
        return x.reshape(x.shape[0], self.n_slots, cfg.c_in, cfg.width, cfg.height)


class TwoUserModel(nn.Module):
    """Shared-encoder two-transmitter autoencoder with device embeddings.

    Both devices encode through the *same* encoder instance; the only
    device-specific parameters are the embedding planes r1 and r2, drawn
    from N(0, 1) at construction and trained jointly with everything else.
    Decoder slot i holds device i's reconstruction.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = Encoder(cfg.c_in + 1, cfg)
        self.decoder = Decoder(2, cfg)
        self.r1 = nn.Parameter(torch.randn(1, cfg.width, cfg.height))
        self.r2 = nn.Parameter(torch.randn(1, cfg.width, cfg.height))

    def device_embedding(self, device_index: int) -> torch.Tensor:
        if device_index not in (1, 2):
            raise ValueError(f"device_index must be 1 or 2, got {device_index}")
        return self.r1 if device_index == 1 else self.r2

    def augment(self, x: torch.Tensor, device_index: int) -> torch.Tensor:
        """Concatenate the device's embedding plane as an extra channel."""
        r = self.device_embedding(device_index)
        if x.shape[2:] != r.shape[1:]:
            raise ValueError(
                f"image spatial dims {tuple(x.shape[2:])} do not match "
                f"embedding {tuple(r.shape[1:])}"
            )
        plane = r.unsqueeze(0).expand(x.shape[0], -1, -1, -1)
        return torch.cat([x, plane.to(x.dtype)], dim=1)

    def encode(self, x: torch.Tensor, device_index: int, snr_db) -> torch.Tensor:
        """Pre-normalization real latent of length 2k for one device."""
        return self.encoder(self.augment(x, device_index), snr_db)

    def decode(self, y: torch.Tensor, snr_db) -> torch.Tensor:
        """(B, 2, C, W, H) reconstructions; slot i belongs to device i."""
        return self.decoder(y, snr_db)


class PointToPointModel(nn.Module):
    """Single-user autoencoder over half the channel symbols (time division)."""

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = Encoder(cfg.c_in, cfg)
        self.decoder = Decoder(1, cfg)

    def encode(self, x: torch.Tensor, snr_db) -> torch.Tensor:
        return self.encoder(x, snr_db)

    def decode(self, y: torch.Tensor, snr_db) -> torch.Tensor:
        return self.decoder(y, snr_db)[:, 0]


def count_parameters(model: nn.Module) -> int:
    """Total trainable scalar parameters, device embeddings included."""
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


MODEL_KINDS = {"two_user": TwoUserModel, "point_to_point": PointToPointModel}


def save_checkpoint(prefix: str, model: nn.Module, manifest: dict) -> None:
    """Write ``{prefix}.pt`` (parameters) and ``{prefix}.json`` (manifest).

    Both files are written atomically so an interrupted run never leaves a
    half-written checkpoint.  The manifest records everything needed to
    rebuild the model plus run metadata supplied by the caller.
    """
    kind = next(
        (name for name, cls in MODEL_KINDS.items() if isinstance(model, cls)), None
    )
    if kind is None:
        raise ValueError(f"unsupported model type {type(model).__name__}")
    cfg = asdict(model.cfg)
    cfg["rho"] = str(model.cfg.rho)
    full = dict(manifest)
    full["model_kind"] = kind
    full["model_config"] = cfg
    full["param_count"] = count_parameters(model)

    buf = io.BytesIO()
    torch.save(model.state_dict(), buf)
    atomic_write_bytes(prefix + ".pt", buf.getvalue())
    atomic_write_bytes(
        prefix + ".json", (json.dumps(full, indent=2, sort_keys=True) + "\n").encode()
    )


def load_checkpoint(prefix: str) -> tuple[nn.Module, dict]:
    """Rebuild a model from a checkpoint prefix; returns (model, manifest)."""
    with open(prefix + ".json", "r", encoding="utf-8") as f:
        manifest = json.load(f)
    cfg_d = dict(manifest["model_config"])
    cfg_d["rho"] = Fraction(cfg_d["rho"])
    cfg = ModelConfig(**cfg_d)
    model = MODEL_KINDS[manifest["model_kind"]](cfg)
    state = torch.load(prefix + ".pt", map_location="cpu", weights_only=True)
    model.load_state_dict(state)
    model.eval()
    return model, manifest
