"""Image sources, train/validation splits, and training-pair subsampling.

Three image sources are supported:

* the standard 32x32 RGB benchmark set, read from its binary batch files
  (one label byte followed by 3072 channel-major pixel bytes per record);
* a directory of 8-bit image files, all of one shape;
* a seeded synthetic generator producing smooth, structured images for
  desk-scale experiments.

Training examples are *ordered* pairs of image indices (device assignment
matters).  Self-pairs (i, i) are excluded by default so the two devices
never transmit the same image; a flag restores the full index square.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import torch

BINARY_RECORD_BYTES = 1 + 3 * 32 * 32  # label byte + RGB planes
TRAIN_BATCH_FILES = [f"data_batch_{i}.bin" for i in range(1, 6)]
TEST_BATCH_FILES = ["test_batch.bin"]


@dataclass
class ImageStore:
    """Uniform-shape image collection, 8-bit values, shape (N, C, W, H)."""

    images: np.ndarray
    source: str = "unknown"

    def __post_init__(self):
        if self.images.ndim != 4:
            raise ValueError(f"expected (N, C, W, H) array, got {self.images.shape}")
        if self.images.dtype != np.uint8:
            raise ValueError(f"expected uint8 pixels, got {self.images.dtype}")

    def __len__(self) -> int:
        return self.images.shape[0]

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def as_float(self, indices) -> torch.Tensor:
        """Selected images as float32 tensors scaled to [0, 1]."""
        x = self.images[np.asarray(indices)]
        return torch.from_numpy(x).to(torch.float32) / 255.0


@dataclass(frozen=True)
class SourceSpec:
    kind: str  # "synthetic" | "benchmark" | "directory"
    path: str | None = None
    split: str = "train"
    count: int | None = None
    shape: tuple[int, int, int] | None = None
    seed: int | None = None


def parse_source_spec(text: str, default_seed: int = 0) -> SourceSpec:
    """Parse a compact dataset spec string.

    Forms::

        synthetic:count=512,shape=3x32x32[,seed=7]
        benchmark:<dir>[:train|test]
        directory:<dir>
    """
    kind, _, rest = text.partition(":")
    kind = kind.strip().lower()
    if kind == "synthetic":
        fields = {}
        for item in rest.split(","):
            if not item.strip():
                continue
            key, _, value = item.partition("=")
            fields[key.strip()] = value.strip()
        try:
            count = int(fields["count"])
            shape = tuple(int(d) for d in fields["shape"].split("x"))
        except KeyError as exc:
            raise ValueError(f"synthetic spec needs count and shape: {text!r}") from exc
        seed = int(fields.get("seed", default_seed))
        if len(shape) != 3:
            raise ValueError(f"shape must be CxWxH, got {fields['shape']!r}")
        return SourceSpec(kind="synthetic", count=count, shape=shape, seed=seed)
    if kind == "benchmark":
        path, _, split = rest.partition(":")
        split = split or "train"
        if split not in ("train", "test"):
            raise ValueError(f"benchmark split must be train or test, got {split!r}")
        return SourceSpec(kind="benchmark", path=path, split=split)
    if kind == "directory":
        return SourceSpec(kind="directory", path=rest)
    raise ValueError(f"unknown dataset source kind {kind!r} in {text!r}")


def synthetic_images(count: int, shape: tuple[int, int, int], seed: int) -> ImageStore:
    """Reproducible structured images: gradients, Gaussian blobs, texture.

    Each image is built from a random oriented ramp, a few soft blobs and a
    low-frequency sinusoidal texture, then min-max scaled to the full 8-bit
    range.  Structure (rather than iid noise) keeps the transmission task
    learnable at desk scale.
    """
    c, w, h = shape
    if c not in (1, 3):
        raise ValueError(f"channel count must be 1 or 3, got {c}")
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    xs, ys = np.meshgrid(
        np.linspace(0.0, 1.0, w), np.linspace(0.0, 1.0, h), indexing="ij"
    )
    out = np.empty((count, c, w, h), dtype=np.uint8)
    n_blobs = 4
    for start in range(0, count, 1024):
        m = min(1024, count - start)
        theta = rng.uniform(0, 2 * np.pi, size=(m, 1, 1))
        img = np.cos(theta) * xs + np.sin(theta) * ys  # (m, w, h) ramps
        cx = rng.uniform(0, 1, size=(m, n_blobs, 1, 1))
        cy = rng.uniform(0, 1, size=(m, n_blobs, 1, 1))
        sig = rng.uniform(0.05, 0.25, size=(m, n_blobs, 1, 1))
        amp = rng.uniform(-1.5, 1.5, size=(m, n_blobs, 1, 1))
        d2 = (xs - cx) ** 2 + (ys - cy) ** 2
        img = img + (amp * np.exp(-d2 / (2 * sig**2))).sum(axis=1)
        fx = rng.uniform(1.0, 4.0, size=(m, 1, 1))
        fy = rng.uniform(1.0, 4.0, size=(m, 1, 1))
        ph = rng.uniform(0, 2 * np.pi, size=(m, 1, 1))
        img = img + 0.3 * np.sin(2 * np.pi * (fx * xs + fy * ys) + ph)
        if c == 1:
            planes = img[:, None]
        else:
            # channel mixes: shared structure with per-channel tint
            gains = rng.uniform(0.5, 1.0, size=(m, c, 1, 1))
            offsets = rng.uniform(-0.2, 0.2, size=(m, c, 1, 1))
            planes = gains * img[:, None] + offsets
        lo = planes.min(axis=(1, 2, 3), keepdims=True)
        hi = planes.max(axis=(1, 2, 3), keepdims=True)
        scaled = (planes - lo) / np.maximum(hi - lo, 1e-9)
        out[start : start + m] = np.round(scaled * 255.0).astype(np.uint8)
    return ImageStore(out, source=f"synthetic(seed={seed})")


def _load_benchmark_binary(root: str, split: str) -> ImageStore:
    names = TRAIN_BATCH_FILES if split == "train" else TEST_BATCH_FILES
    chunks = []
    for name in names:
        path = os.path.join(root, name)
        if not os.path.exists(path):
            raise FileNotFoundError(f"missing benchmark batch file {path}")
        raw = np.fromfile(path, dtype=np.uint8)
        if raw.size % BINARY_RECORD_BYTES:
            raise ValueError(
                f"{path}: size {raw.size} is not a multiple of "
                f"{BINARY_RECORD_BYTES}-byte records"
            )
        records = raw.reshape(-1, BINARY_RECORD_BYTES)
        chunks.append(records[:, 1:].reshape(-1, 3, 32, 32))
    return ImageStore(np.concatenate(chunks, axis=0), source=f"benchmark:{split}")


def _load_directory(path: str) -> ImageStore:
    from PIL import Image

    names = sorted(
        n
        for n in os.listdir(path)
        if n.lower().endswith((".png", ".jpg", ".jpeg", ".bmp"))
    )
    if not names:
        raise ValueError(f"no image files found in {path}")
    arrays = []
    for name in names:
        with Image.open(os.path.join(path, name)) as im:
            im = im.convert("L") if im.mode in ("L", "I;16", "1") else im.convert("RGB")
            a = np.asarray(im, dtype=np.uint8)
        if a.ndim == 2:
            a = a[None]
        else:
            a = a.transpose(2, 0, 1)
        arrays.append(a)
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1:
        raise ValueError(f"images in {path} have inconsistent shapes: {sorted(shapes)}")
    return ImageStore(np.stack(arrays), source=f"directory:{path}")


def load_images(spec: SourceSpec | str, default_seed: int = 0) -> ImageStore:
    """Load an image store from a :class:`SourceSpec` or spec string."""
    if isinstance(spec, str):
        spec = parse_source_spec(spec, default_seed=default_seed)
    if spec.kind == "synthetic":
        seed = spec.seed if spec.seed is not None else default_seed
        return synthetic_images(spec.count, spec.shape, seed)
    if spec.kind == "benchmark":
        return _load_benchmark_binary(spec.path, spec.split)
    if spec.kind == "directory":
        return _load_directory(spec.path)
    raise ValueError(f"unknown source kind {spec.kind!r}")


def split_train_val(n_images: int, n_val: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint, exhaustive, seed-deterministic train/validation index split."""
    if not 0 < n_val < n_images:
        raise ValueError(f"n_val must be in (0, {n_images}), got {n_val}")
    perm = np.random.default_rng(seed).permutation(n_images)
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


@dataclass
class PairDataset:
    """Ordered (device-1 index, device-2 index) pairs into an image store."""

    pairs: np.ndarray
    split: str = "train"

    def __post_init__(self):
        self.pairs = np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2)

    def __len__(self) -> int:
        return self.pairs.shape[0]

    def shuffled(self, rng: np.random.Generator) -> "PairDataset":
        """New dataset with permuted pair order; the pair multiset is unchanged."""
        return PairDataset(self.pairs[rng.permutation(len(self))], split=self.split)

    def unique_count(self) -> int:
        if len(self) == 0:
            return 0
        base = int(self.pairs.max()) + 1
        codes = self.pairs[:, 0] * base + self.pairs[:, 1]
        return int(np.unique(codes).size)

    def export(self, path: str) -> None:
        """Two-column integer text dump for audit."""
        np.savetxt(path, self.pairs, fmt="%d")


def subsample_pairs(
    n: int,
    t: int,
    rng: np.random.Generator,
    include_self_pairs: bool = False,
) -> PairDataset:
    """Draw ``t`` unique ordered index pairs from [0, n) x [0, n).

    Sampling is uniform without replacement, by drawing candidate pairs and
    rejecting duplicates through a hash set, so neither memory nor time ever
    scales with n^2 when t is small.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    available = n * n if include_self_pairs else n * n - n
    if t < 0 or t > available:
        raise ValueError(f"t={t} exceeds the {available} available unique pairs")
    seen: set[int] = set()
    first = np.empty(t, dtype=np.int64)
    second = np.empty(t, dtype=np.int64)
    filled = 0
    while filled < t:
        m = max(16, int((t - filled) * 1.3))
        i = rng.integers(0, n, size=m)
        j = rng.integers(0, n, size=m)
        for a, b in zip(i.tolist(), j.tolist()):
            if not include_self_pairs and a == b:
                continue
            code = a * n + b
            if code in seen:
                continue
            seen.add(code)
            first[filled] = a
            second[filled] = b
            filled += 1
            if filled == t:
                break
    return PairDataset(np.column_stack([first, second]), split="train")


def _positional_pairs(indices, split: str) -> PairDataset:
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size == 0:
        raise ValueError("cannot build pairs from an empty index set")
    half = indices.size // 2
    return PairDataset(
        np.column_stack([indices[:half], indices[half : 2 * half]]), split=split
    )


def make_validation_pairs(val_indices) -> PairDataset:
    """Fixed validation pairs: first half paired positionally with second half.

    The pairing is deterministic and seed-independent, so the same pairs are
    evaluated after every epoch.  A trailing element of an odd-length index
    set is dropped.
    """
    return _positional_pairs(val_indices, split="val")


def make_test_pairs(test_indices) -> PairDataset:
    """Test pairs under the same positional halving rule as validation."""
    return _positional_pairs(test_indices, split="test")


def iter_pair_batches(store: ImageStore, pairs: PairDataset, batch_size: int):
    """Yield (x1, x2) float batches in pair order."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    for start in range(0, len(pairs), batch_size):
        chunk = pairs.pairs[start : start + batch_size]
        yield store.as_float(chunk[:, 0]), store.as_float(chunk[:, 1])


def iter_image_batches(store: ImageStore, indices, batch_size: int):
    """Yield single-image float batches in index order."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    indices = np.asarray(indices)
    for start in range(0, indices.size, batch_size):
        yield store.as_float(indices[start : start + batch_size])
