"""Experiment runner: train, eval, compare, params, and region subcommands.

Configuration comes from a flat key=value file plus command-line overrides;
every run echoes the fully resolved configuration into its output directory
so results can be reproduced from the artifacts alone.  Results are always
written as CSV; plots are opt-in so headless runs need no plotting backend.

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from fractions import Fraction

import numpy as np
import torch

from . import data as data_mod
from . import evaluation, training
from ._util import atomic_write_text, derive_seed
from .config import (
    ConfigError,
    ExperimentConfig,
    build_config,
    read_config_file,
    resolve_desk_pair_count,
)
from .model import (
    ModelConfig,
    PointToPointModel,
    TwoUserModel,
    load_checkpoint,
    save_checkpoint,
)

OUTPUT_ROOT_ENV = "NOMA_JSCC_OUTPUT"


def _default_output_root() -> str:
    return os.environ.get(OUTPUT_ROOT_ENV, "runs")


def _model_config(cfg: ExperimentConfig, image_shape) -> ModelConfig:
    c, w, h = image_shape
    try:
        return ModelConfig.for_image(cfg.rho, c, w, h, cfg.filter_width)
    except ValueError as exc:
        raise ConfigError(f"rho: {exc}") from exc


def _train_config(cfg: ExperimentConfig) -> training.TrainConfig:
    return training.TrainConfig(
        learning_rate=cfg.learning_rate,
        batch_size=cfg.batch_size,
        patience=cfg.patience,
        snr_range=tuple(cfg.snr_train_range),
        p_avg=cfg.p_avg,
        seed=cfg.seed,
        max_epochs=cfg.max_epochs,
        val_probe_snrs=tuple(cfg.val_probe_snrs),
    )


def _prepare_data(cfg: ExperimentConfig):
    """Load the training store and build train pairs and validation pairs."""
    store = data_mod.load_images(cfg.dataset, default_seed=derive_seed(cfg.seed, "data"))
    if cfg.n_val >= len(store):
        raise ConfigError(
            f"n_val: {cfg.n_val} must be smaller than the dataset size {len(store)}"
        )
    train_idx, val_idx = data_mod.split_train_val(
        len(store), cfg.n_val, seed=derive_seed(cfg.seed, "split")
    )
    t = resolve_desk_pair_count(cfg, len(train_idx))
    positions = data_mod.subsample_pairs(
        len(train_idx),
        t,
        np.random.default_rng(derive_seed(cfg.seed, "pairs")),
        include_self_pairs=cfg.include_self_pairs,
    )
    train_pairs = data_mod.PairDataset(train_idx[positions.pairs], split="train")
    val_pairs = data_mod.make_validation_pairs(val_idx)
    return store, train_pairs, val_pairs


def _load_eval_store(cfg: ExperimentConfig) -> data_mod.ImageStore:
    """Held-out store for evaluation.

    Benchmark sources switch to their test split; synthetic sources draw a
    fresh seed so test images never overlap training; directory sources are
    used as-is (the caller points at a held-out directory).
    """
    spec = data_mod.parse_source_spec(
        cfg.dataset, default_seed=derive_seed(cfg.seed, "data")
    )
    if spec.kind == "benchmark":
        spec = dataclasses.replace(spec, split="test")
    elif spec.kind == "synthetic":
        spec = dataclasses.replace(spec, seed=derive_seed(cfg.seed, "test-data"))
    return data_mod.load_images(spec)


def _epoch_writer(out_dir: str, prefix: str, manifest_base: dict):
    """History/checkpoint writer invoked after every epoch."""
    history: list[training.EpochRecord] = []
    history_path = os.path.join(out_dir, f"{prefix}history.csv")
    ckpt_prefix = os.path.join(out_dir, f"{prefix}checkpoint")

    def on_epoch(record, improved, model):
        history.append(record)
        training.write_history_csv(history_path, history)
        if improved:
            manifest = dict(manifest_base)
            manifest["epoch"] = record.epoch
            manifest["best_val_psnr"] = record.val_psnr
            save_checkpoint(ckpt_prefix, model, manifest)

    return on_epoch, history_path, ckpt_prefix


def run_train(cfg: ExperimentConfig) -> dict:
    """Train per the configured method; returns paths of written artifacts."""
    os.makedirs(cfg.output_dir, exist_ok=True)
    cfg.echo(os.path.join(cfg.output_dir, "config.txt"))
    store, train_pairs, val_pairs = _prepare_data(cfg)
    train_pairs.export(os.path.join(cfg.output_dir, "train_pairs.txt"))
    mcfg = _model_config(cfg, store.image_shape)
    tcfg = _train_config(cfg)
    torch.manual_seed(derive_seed(cfg.seed, "init"))

    base = {
        "method": cfg.method,
        "rho": str(cfg.rho),
        "p_avg": cfg.p_avg,
        "seed": cfg.seed,
    }
    artifacts = {"config": os.path.join(cfg.output_dir, "config.txt")}

    if cfg.method == "tdma":
        try:
            half_cfg = mcfg.half_bandwidth()
        except ValueError as exc:
            raise ConfigError(f"rho: {exc}") from exc
        model = PointToPointModel(half_cfg)
        on_epoch, hist, ckpt = _epoch_writer(cfg.output_dir, "", base)
        result = training.train(
            model, store, train_pairs, val_pairs, tcfg, task="p2p", on_epoch=on_epoch
        )
        model.load_state_dict(result.best_state)
        save_checkpoint(
            ckpt, model,
            {**base, "epoch": result.best_epoch, "best_val_psnr": result.best_val_psnr},
        )
        artifacts.update(history=hist, checkpoint=ckpt)
    elif cfg.method in ("noma", "single-user"):
        model = TwoUserModel(mcfg)
        task = "mac" if cfg.method == "noma" else "orthogonal"
        on_epoch, hist, ckpt = _epoch_writer(cfg.output_dir, "", base)
        result = training.train(
            model, store, train_pairs, val_pairs, tcfg, task=task, on_epoch=on_epoch
        )
        model.load_state_dict(result.best_state)
        save_checkpoint(
            ckpt, model,
            {**base, "epoch": result.best_epoch, "best_val_psnr": result.best_val_psnr},
        )
        artifacts.update(history=hist, checkpoint=ckpt)
    elif cfg.method == "noma-cl":
        model = TwoUserModel(mcfg)
        base1 = {**base, "method": "single-user"}
        on_epoch1, hist1, ckpt1 = _epoch_writer(cfg.output_dir, "phase1_", base1)
        on_epoch2, hist2, ckpt2 = _epoch_writer(cfg.output_dir, "", base)
        result = training.train_curriculum(
            model, store, train_pairs, val_pairs, tcfg,
            on_epoch_phase1=on_epoch1, on_epoch_phase2=on_epoch2,
        )
        model.load_state_dict(result.phase1.best_state)
        save_checkpoint(
            ckpt1, model,
            {
                **base1,
                "epoch": result.phase1.best_epoch,
                "best_val_psnr": result.phase1.best_val_psnr,
            },
        )
        model.load_state_dict(result.phase2.best_state)
        save_checkpoint(
            ckpt2, model,
            {
                **base,
                "epoch": result.phase2.best_epoch,
                "best_val_psnr": result.phase2.best_val_psnr,
                "handoff_val_psnr": result.handoff_val_psnr,
            },
        )
        artifacts.update(
            history=hist2, checkpoint=ckpt2,
            phase1_history=hist1, phase1_checkpoint=ckpt1,
        )
    else:  # pragma: no cover - validate() rejects unknown methods
        raise ConfigError(f"method: unknown method {cfg.method!r}")
    return artifacts


def run_eval(cfg: ExperimentConfig, checkpoint_prefix: str) -> dict:
    """Evaluate a checkpoint over the test SNR grid; writes CSV (and plots)."""
    if not os.path.exists(checkpoint_prefix + ".json"):
        raise ConfigError(f"checkpoint: {checkpoint_prefix}.json not found")
    model, manifest = load_checkpoint(checkpoint_prefix)
    os.makedirs(cfg.output_dir, exist_ok=True)
    store = _load_eval_store(cfg)
    if tuple(store.image_shape) != (
        model.cfg.c_in, model.cfg.width, model.cfg.height,
    ):
        raise ConfigError(
            f"dataset: image shape {store.image_shape} does not match "
            f"checkpoint ({model.cfg.c_in}, {model.cfg.width}, {model.cfg.height})"
        )
    expected_rho = cfg.rho if manifest["method"] != "tdma" else cfg.rho / 2
    if model.cfg.rho != expected_rho:
        raise ConfigError(
            f"rho: checkpoint was built for {model.cfg.rho}, config asks {cfg.rho}"
        )
    test_pairs = data_mod.make_test_pairs(np.arange(len(store)))
    method = manifest["method"]
    eval_seed = derive_seed(cfg.seed, "eval")
    if method == "tdma":
        result = evaluation.evaluate_tdma(
            model, store, test_pairs, cfg.snr_test_list, cfg.p_avg, eval_seed,
            batch_size=cfg.batch_size, power_mode=cfg.tdma_power_mode,
        )
    elif method == "single-user":
        result = evaluation.evaluate_single_user(
            model, store, test_pairs, cfg.snr_test_list, cfg.p_avg, eval_seed,
            batch_size=cfg.batch_size,
        )
    else:
        result = evaluation.evaluate_sweep(
            model, store, test_pairs, cfg.snr_test_list, cfg.p_avg, eval_seed,
            batch_size=cfg.batch_size, mode="mac", method=method,
        )
    csv_path = os.path.join(cfg.output_dir, f"{method}.csv")
    result.to_csv(csv_path)
    artifacts = {"csv": csv_path}
    if cfg.plot:
        artifacts["plot"] = _plot_sweeps(
            [result], os.path.join(cfg.output_dir, f"{method}.png")
        )
    return artifacts


COMPARE_METHODS = ("tdma", "noma", "noma-cl")


def run_compare(cfg: ExperimentConfig) -> dict:
    """Train and evaluate all four methods on one dataset and seed."""
    os.makedirs(cfg.output_dir, exist_ok=True)
    cfg.echo(os.path.join(cfg.output_dir, "config.txt"))
    results = []
    artifacts = {"config": os.path.join(cfg.output_dir, "config.txt")}
    for method in COMPARE_METHODS:
        sub = dataclasses.replace(
            cfg, method=method, output_dir=os.path.join(cfg.output_dir, method)
        )
        trained = run_train(sub)
        eval_cfg = dataclasses.replace(sub, plot=False, output_dir=cfg.output_dir)
        artifacts[f"{method}_csv"] = run_eval(eval_cfg, trained["checkpoint"])["csv"]
        if method == "noma-cl":
            artifacts["single-user_csv"] = run_eval(
                eval_cfg, trained["phase1_checkpoint"]
            )["csv"]
    if cfg.plot:
        for name in ("tdma", "noma", "noma-cl", "single-user"):
            results.append(_read_sweep_csv(artifacts[f"{name}_csv"], name, cfg.rho))
        artifacts["plot"] = _plot_sweeps(
            results, os.path.join(cfg.output_dir, "comparison.png")
        )
    return artifacts


def run_params(cfg: ExperimentConfig, image_shape=None) -> dict:
    """Parameter counts of the two-user model vs the time-division model."""
    if image_shape is None:
        spec = data_mod.parse_source_spec(cfg.dataset, default_seed=cfg.seed)
        if spec.kind == "synthetic":
            image_shape = spec.shape
        elif spec.kind == "benchmark":
            image_shape = (3, 32, 32)
        else:
            image_shape = data_mod.load_images(spec).image_shape
    mcfg = _model_config(cfg, image_shape)
    from .model import count_parameters

    try:
        half_cfg = mcfg.half_bandwidth()
    except ValueError as exc:
        raise ConfigError(f"rho: {exc}") from exc
    n_noma = count_parameters(TwoUserModel(mcfg))
    n_tdma = count_parameters(PointToPointModel(half_cfg))
    return {
        "noma_params": n_noma,
        "tdma_params": n_tdma,
        "ratio": n_noma / n_tdma,
    }


def run_region(
    p1: float, p2: float, noise_variance: float, grid: int, out_dir: str, plot: bool
) -> dict:
    """Capacity-region boundary and time-sharing rates as CSV (and plot)."""
    os.makedirs(out_dir, exist_ok=True)
    boundary = evaluation.mac_capacity_region(p1, p2, noise_variance, grid=grid)
    alphas = np.linspace(0.0, 1.0, grid)
    sharing = evaluation.tdma_rates(p1, p2, noise_variance, alphas)
    lines = ["curve,r1,r2"]
    for pt in boundary:
        lines.append(f"boundary,{pt.r1:.6f},{pt.r2:.6f}")
    for pt in sharing:
        lines.append(f"tdma,{pt.r1:.6f},{pt.r2:.6f}")
    csv_path = os.path.join(out_dir, "region.csv")
    atomic_write_text(csv_path, "\n".join(lines) + "\n")
    artifacts = {"csv": csv_path}
    if plot:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(5, 4))
        ax.plot([p.r1 for p in boundary], [p.r2 for p in boundary], label="capacity region")
        ax.plot([p.r1 for p in sharing], [p.r2 for p in sharing], "--", label="time sharing")
        ax.set_xlabel("R1 (bits/channel use)")
        ax.set_ylabel("R2 (bits/channel use)")
        ax.legend()
        fig.tight_layout()
        path = os.path.join(out_dir, "region.png")
        fig.savefig(path)
        plt.close(fig)
        artifacts["plot"] = path
    return artifacts


def _read_sweep_csv(path: str, method: str, rho) -> evaluation.SweepResult:
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        next(f)
        for line in f:
            snr, avg, d1, d2 = (float(v) for v in line.strip().split(","))
            rows.append(evaluation.SweepRow(snr, avg, d1, d2))
    return evaluation.SweepResult(method=method, rho=Fraction(rho), rows=rows)


def _plot_sweeps(results, path: str) -> str:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4.5))
    for res in results:
        snrs = [r.snr_db for r in res.rows]
        ax.plot(snrs, [r.psnr_avg for r in res.rows], marker="o", label=res.method)
        if len(results) == 1:
            ax.plot(snrs, [r.psnr_dev1 for r in res.rows], ":", label="device 1")
            ax.plot(snrs, [r.psnr_dev2 for r in res.rows], ":", label="device 2")
    ax.set_xlabel("test SNR (dB)")
    ax.set_ylabel("PSNR (dB)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


_FLAGS = [
    ("--method", "method", str),
    ("--rho", "rho", str),
    ("--p-avg", "p_avg", float),
    ("--snr-train-range", "snr_train_range", str),
    ("--snr-test-list", "snr_test_list", str),
    ("--batch-size", "batch_size", int),
    ("--learning-rate", "learning_rate", float),
    ("--patience", "patience", int),
    ("--pair-count", "pair_count", int),
    ("--seed", "seed", int),
    ("--dataset", "dataset", str),
    ("--filter-width", "filter_width", int),
    ("--output-dir", "output_dir", str),
    ("--n-val", "n_val", int),
    ("--max-epochs", "max_epochs", str),
    ("--tdma-power-mode", "tdma_power_mode", str),
    ("--val-probe-snrs", "val_probe_snrs", str),
]
_BOOL_FLAGS = [
    ("--desk-scale", "desk_scale"),
    ("--include-self-pairs", "include_self_pairs"),
    ("--plot", "plot"),
]


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat key=value configuration file")
    for flag, dest, typ in _FLAGS:
        parser.add_argument(flag, dest=dest, type=typ, default=None)
    for flag, dest in _BOOL_FLAGS:
        parser.add_argument(
            flag, dest=dest, action=argparse.BooleanOptionalAction, default=None
        )


def _config_from_args(args: argparse.Namespace, need_output: bool = True) -> ExperimentConfig:
    file_values = read_config_file(args.config) if args.config else {}
    keys = [dest for _, dest, _ in _FLAGS] + [dest for _, dest in _BOOL_FLAGS]
    overrides = {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}
    merged = dict(file_values)
    merged.update({k: v for k, v in overrides.items()})
    if not merged.get("output_dir"):
        method = merged.get("method", "noma")
        merged["output_dir"] = os.path.join(_default_output_root(), str(method))
    if not need_output and not merged.get("dataset"):
        # params only needs an image shape, not actual data
        merged["dataset"] = "synthetic:count=1,shape=3x32x32"
    return build_config(merged)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="noma-jscc",
        description="Train and evaluate image transmission over a two-user channel",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train one method")
    _add_config_flags(p_train)

    p_eval = sub.add_parser("eval", help="evaluate a trained checkpoint")
    _add_config_flags(p_eval)
    p_eval.add_argument("--checkpoint", required=True, help="checkpoint path prefix")

    p_compare = sub.add_parser("compare", help="train and evaluate all methods")
    _add_config_flags(p_compare)

    p_params = sub.add_parser("params", help="report model parameter counts")
    _add_config_flags(p_params)

    p_region = sub.add_parser("region", help="capacity region utility")
    p_region.add_argument("--p1", type=float, default=1.0)
    p_region.add_argument("--p2", type=float, default=1.0)
    p_region.add_argument("--noise-variance", type=float, default=1.0)
    p_region.add_argument("--grid", type=int, default=64)
    p_region.add_argument("--output-dir", default=None)
    p_region.add_argument(
        "--plot", action=argparse.BooleanOptionalAction, default=False
    )

    args = parser.parse_args(argv)
    try:
        if args.command == "train":
            artifacts = run_train(_config_from_args(args))
        elif args.command == "eval":
            artifacts = run_eval(_config_from_args(args), args.checkpoint)
        elif args.command == "compare":
            artifacts = run_compare(_config_from_args(args))
        elif args.command == "params":
            report = run_params(_config_from_args(args, need_output=False))
            print(f"two-user parameters: {report['noma_params']}")
            print(f"time-division parameters: {report['tdma_params']}")
            print(f"ratio: {report['ratio']:.4f}")
            return 0
        else:  # region
            out = args.output_dir or os.path.join(_default_output_root(), "region")
            artifacts = run_region(
                args.p1, args.p2, args.noise_variance, args.grid, out, args.plot
            )
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - report any runtime failure
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for name, path in artifacts.items():
        print(f"{name}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
