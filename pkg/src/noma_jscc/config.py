"""Experiment configuration: defaults, file parsing, validation, echo.

Config files are flat ``key = value`` text; ``#`` starts a comment.
Command-line flags override file values.  Defaults follow the reference
operating point (learning rate 1e-4, batch 64, 256 middle filters,
P_avg = 0.5, patience 10, train SNR uniform on [0, 20] dB, 200000 training
pairs).  The desk-scale profile swaps in a small synthetic dataset, 64
filters, patience 5, and a proportional pair budget so an end-to-end run
finishes in minutes.

Every run echoes its fully resolved configuration into the output
directory; re-running from the echoed file reproduces the run exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from fractions import Fraction

from ._util import atomic_write_text

METHODS = ("noma", "noma-cl", "tdma", "single-user")
DESK_SCALE_DATASET = "synthetic:count=640,shape=3x32x32"
DESK_PAIRS_PER_IMAGE = 4.4  # 200000 / 45000


class ConfigError(ValueError):
    """Invalid experiment configuration; message names the offending field."""


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes"):
        return True
    if t in ("false", "0", "no"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_float_list(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in str(text).split(",") if v.strip())


def _parse_opt_int(text: str):
    t = str(text).strip().lower()
    return None if t in ("none", "") else int(t)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    if isinstance(value, (tuple, list)):
        return ",".join(f"{v:g}" for v in value)
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, float):
        return f"{value:g}"
    return str(value)


# field name -> parser applied to raw text from files or CLI strings
_PARSERS = {
    "method": str,
    "rho": Fraction,
    "p_avg": float,
    "snr_train_range": _parse_float_list,
    "snr_test_list": _parse_float_list,
    "batch_size": int,
    "learning_rate": float,
    "patience": int,
    "pair_count": int,
    "seed": int,
    "dataset": str,
    "filter_width": int,
    "output_dir": str,
    "desk_scale": _parse_bool,
    "n_val": int,
    "max_epochs": _parse_opt_int,
    "tdma_power_mode": str,
    "val_probe_snrs": _parse_float_list,
    "include_self_pairs": _parse_bool,
    "plot": _parse_bool,
}


@dataclass
class ExperimentConfig:
    method: str = "noma"
    rho: Fraction = Fraction(1, 3)
    p_avg: float = 0.5
    snr_train_range: tuple[float, ...] = (0.0, 20.0)
    snr_test_list: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0)
    batch_size: int = 64
    learning_rate: float = 1e-4
    patience: int = 10
    pair_count: int = 200000
    seed: int = 0
    dataset: str = ""
    filter_width: int = 256
    output_dir: str = ""
    desk_scale: bool = False
    n_val: int = 5000
    max_epochs: int | None = None
    tdma_power_mode: str = "per_symbol"
    val_probe_snrs: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0)
    include_self_pairs: bool = False
    plot: bool = False

    def validate(self) -> None:
        if self.method not in METHODS:
            raise ConfigError(f"method: must be one of {METHODS}, got {self.method!r}")
        if self.rho <= 0:
            raise ConfigError(f"rho: must be positive, got {self.rho}")
        if self.p_avg <= 0:
            raise ConfigError(f"p_avg: must be positive, got {self.p_avg}")
        if len(self.snr_train_range) != 2:
            raise ConfigError(
                f"snr_train_range: expected low,high got {self.snr_train_range}"
            )
        if self.snr_train_range[0] > self.snr_train_range[1]:
            raise ConfigError(f"snr_train_range: low > high {self.snr_train_range}")
        if not self.snr_test_list:
            raise ConfigError("snr_test_list: must not be empty")
        if any(b <= a for a, b in zip(self.snr_test_list, self.snr_test_list[1:])):
            raise ConfigError(
                f"snr_test_list: must be strictly increasing, got {self.snr_test_list}"
            )
        for name in ("batch_size", "patience", "n_val", "filter_width"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name}: must be >= 1, got {getattr(self, name)}")
        # pair_count 0 is the desk-scale sentinel for "proportional to n"
        if self.pair_count < 1 and not (self.desk_scale and self.pair_count == 0):
            raise ConfigError(f"pair_count: must be >= 1, got {self.pair_count}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate: must be positive, got {self.learning_rate}")
        if self.max_epochs is not None and self.max_epochs < 1:
            raise ConfigError(f"max_epochs: must be >= 1 or none, got {self.max_epochs}")
        if self.tdma_power_mode not in ("per_symbol", "energy_equalized"):
            raise ConfigError(
                f"tdma_power_mode: must be per_symbol or energy_equalized, "
                f"got {self.tdma_power_mode!r}"
            )
        if not self.dataset:
            raise ConfigError("dataset: a data source spec is required")
        if not self.output_dir:
            raise ConfigError("output_dir: an output directory is required")

    def echo(self, path: str) -> None:
        """Write the fully resolved configuration as a reloadable file."""
        lines = [f"{f.name} = {_fmt(getattr(self, f.name))}" for f in fields(self)]
        atomic_write_text(path, "\n".join(lines) + "\n")


def read_config_file(path: str) -> dict[str, str]:
    """Raw key/value pairs from a flat config file."""
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, value = line.split("=", 1)
            values[key.strip()] = value.strip()
    return values


def build_config(
    file_values: dict[str, str] | None = None,
    overrides: dict[str, object] | None = None,
) -> ExperimentConfig:
    """Merge defaults, config-file values, and CLI overrides, then validate.

    ``overrides`` may hold already-typed values (from argparse) or strings;
    strings are run through the same per-field parsers as file values.
    """
    cfg = ExperimentConfig()
    for source in (file_values or {}), (overrides or {}):
        for key, raw in source.items():
            if key not in _PARSERS:
                raise ConfigError(f"{key}: unknown configuration field")
            if raw is None:
                continue
            try:
                value = _PARSERS[key](raw) if isinstance(raw, str) else raw
            except (ValueError, ZeroDivisionError) as exc:
                raise ConfigError(f"{key}: {exc}") from exc
            if key == "rho" and not isinstance(value, Fraction):
                value = Fraction(value)
            setattr(cfg, key, value)
    _apply_desk_profile(cfg, set((file_values or {})) | set((overrides or {})))
    cfg.validate()
    return cfg


def _apply_desk_profile(cfg: ExperimentConfig, explicit: set[str]) -> None:
    """Desk-scale defaults for any field the user did not set explicitly."""
    if not cfg.desk_scale:
        return
    if "filter_width" not in explicit:
        cfg.filter_width = 64
    if "patience" not in explicit:
        cfg.patience = 5
    if "dataset" not in explicit and not cfg.dataset:
        cfg.dataset = DESK_SCALE_DATASET
    if "n_val" not in explicit:
        cfg.n_val = 128
    if "pair_count" not in explicit:
        cfg.pair_count = 0  # resolved from the train split size at run time


def resolve_desk_pair_count(cfg: ExperimentConfig, n_train: int) -> int:
    """Proportional pair budget t = 4.4 * n for desk-scale runs."""
    if cfg.pair_count > 0:
        return cfg.pair_count
    return max(1, int(DESK_PAIRS_PER_IMAGE * n_train))
