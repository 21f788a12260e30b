"""Joint source-channel coding of image pairs over a two-user noisy channel.

Two transmitters send distinct images simultaneously over a shared complex
AWGN multiple-access channel through a shared-parameter autoencoder; a
single receiver reconstructs both.  The package covers channel simulation,
the Siamese encoder/decoder models with device embeddings, pair
subsampling, curriculum training, PSNR sweeps, baselines, and an
experiment CLI.
"""

from .channel import (
    ChannelSpec,
    DegenerateLatentError,
    complex_to_reals,
    noise_variance_to_snr,
    normalize_power,
    reals_to_complex,
    sample_noise,
    snr_to_noise_variance,
    transmit_mac,
    transmit_p2p,
)
from .config import ConfigError, ExperimentConfig, build_config
from .data import (
    ImageStore,
    PairDataset,
    load_images,
    make_test_pairs,
    make_validation_pairs,
    split_train_val,
    subsample_pairs,
    synthetic_images,
)
from .evaluation import (
    RatePoint,
    SweepResult,
    evaluate_single_user,
    evaluate_sweep,
    evaluate_tdma,
    fairness_gap,
    mac_capacity_region,
    psnr,
    tdma_rates,
)
from .model import (
    ModelConfig,
    PointToPointModel,
    TwoUserModel,
    count_parameters,
    load_checkpoint,
    save_checkpoint,
)
from .training import (
    TrainConfig,
    mse,
    pair_loss,
    train,
    train_curriculum,
    train_step,
    validation_psnr,
)

__version__ = "0.1.0"

__all__ = [
    "ChannelSpec",
    "ConfigError",
    "DegenerateLatentError",
    "ExperimentConfig",
    "ImageStore",
    "ModelConfig",
    "PairDataset",
    "PointToPointModel",
    "RatePoint",
    "SweepResult",
    "TrainConfig",
    "TwoUserModel",
    "build_config",
    "complex_to_reals",
    "count_parameters",
    "evaluate_single_user",
    "evaluate_sweep",
    "evaluate_tdma",
    "fairness_gap",
    "load_checkpoint",
    "load_images",
    "mac_capacity_region",
    "make_test_pairs",
    "make_validation_pairs",
    "mse",
    "noise_variance_to_snr",
    "normalize_power",
    "pair_loss",
    "psnr",
    "reals_to_complex",
    "sample_noise",
    "save_checkpoint",
    "snr_to_noise_variance",
    "split_train_val",
    "subsample_pairs",
    "synthetic_images",
    "tdma_rates",
    "train",
    "train_curriculum",
    "train_step",
    "transmit_mac",
    "transmit_p2p",
    "validation_psnr",
]
