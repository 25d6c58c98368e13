"""Datasets: unit-norm regression sets, synthetic clusters, IDX files, batching."""

from __future__ import annotations

import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .errors import ConsistencyError, FormatError, LengthError, ValidationError

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    """``samples`` is (M, d); ``labels`` are class indices or real targets.

    ``image_shape`` (C, H, W), when set, is how rows are reshaped for CNNs.
    """

    samples: np.ndarray
    labels: np.ndarray
    normalized: bool = False
    image_shape: Optional[tuple] = None
    num_classes: Optional[int] = None

    def __post_init__(self):
        if self.samples.ndim != 2:
            raise ValidationError(f"samples must be (M, d), got shape {self.samples.shape}")
        if len(self.labels) != len(self.samples):
            raise ValidationError(f"{len(self.samples)} samples but {len(self.labels)} labels")
        self.samples.setflags(write=False)
        self.labels.setflags(write=False)

    @property
    def M(self) -> int:
        return self.samples.shape[0]

    @property
    def d(self) -> int:
        return self.samples.shape[1]

    @property
    def R(self) -> float:
        return float(np.abs(self.labels).max()) if self.M else 0.0

    def __len__(self):
        return self.M

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return replace(self, samples=self.samples[idx].copy(), labels=self.labels[idx].copy())

    def images(self, idx=None) -> np.ndarray:
        x = self.samples if idx is None else self.samples[idx]
        if self.image_shape is None:
            raise ValidationError("dataset has no image_shape")
        return x.reshape((len(x),) + tuple(self.image_shape))

    def regression_labels(self) -> "Dataset":
        """Class indices scaled to [0, 1] so that the label bound R is 1."""
        k = self.num_classes or int(self.labels.max()) + 1
        y = self.labels.astype(np.float64) / max(k - 1, 1)
        return replace(self, labels=y)

    def split(self, n_first: int) -> tuple:
        return self.subset(np.arange(n_first)), self.subset(np.arange(n_first, self.M))


@dataclass(frozen=True)
class Batch:
    inputs: np.ndarray
    labels: np.ndarray
    index: int

    def __post_init__(self):
        if len(self.inputs) != len(self.labels):
            raise ValidationError("batch inputs and labels differ in length")


def l2_normalize(ds: Dataset) -> Dataset:
    norms = np.linalg.norm(ds.samples, axis=1)
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise ValidationError(f"row {int(zero[0])} has zero L2 norm")
    x = ds.samples / norms[:, None]
    if ds.normalized:
        # keep idempotence exact
        x = np.where(np.abs(norms - 1.0)[:, None] <= 1e-12, ds.samples, x)
    return replace(ds, samples=x, normalized=True)


def standardize(ds: Dataset, stats: Optional[tuple] = None) -> tuple:
    """Per-feature mean 0 / std 1. Returns the dataset and the (mean, std) used."""
    if stats is None:
        mean = ds.samples.mean(axis=0)
        std = ds.samples.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        stats = (mean, std)
    mean, std = stats
    return replace(ds, samples=(ds.samples - mean) / std, normalized=False), stats


def synth_clusters(classes: int, per_class: int, d: int, spread: float, seed: int,
                   image_shape: Optional[tuple] = None) -> Dataset:
    """Gaussian blobs of std ``spread`` around ``classes`` random unit-vector centers.

    Samples are interleaved by class (sample i has class ``i % classes``).
    """
    if classes < 2 or per_class < 1:
        raise ValidationError(f"need classes >= 2 and per_class >= 1, got {classes}, {per_class}")
    if image_shape is not None and int(np.prod(image_shape)) != d:
        raise ValidationError(f"image_shape {image_shape} does not hold {d} features")
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(classes, d))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    labels = np.tile(np.arange(classes), per_class)
    x = centers[labels] + spread * rng.normal(size=(labels.size, d))
    return Dataset(x, labels.astype(np.int64), image_shape=image_shape, num_classes=classes)


def synth_gratings(classes: int, per_class: int, side: int, noise: float, seed: int,
                   orientations: int = 5) -> Dataset:
    """Noisy sinusoidal gratings; the class fixes orientation and frequency.

    Class ``c`` uses orientation ``pi * (c % orientations) / orientations`` and
    frequency ``0.8 * (1 + c // orientations)`` radians per pixel; the phase is
    uniform, so only spatially local structure identifies the class. Samples
    are interleaved by class and shaped (1, side, side).
    """
    if classes < 2 or per_class < 1 or side < 1 or orientations < 1:
        raise ValidationError(f"need classes >= 2, per_class >= 1, side >= 1, got {classes}, {per_class}, {side}")
    rng = np.random.default_rng(seed)
    labels = np.tile(np.arange(classes), per_class)
    theta = np.pi * (labels % orientations) / orientations
    freq = 0.8 * (1 + labels // orientations)
    phase = rng.uniform(0.0, 2 * np.pi, labels.size)
    yy, xx = np.mgrid[0:side, 0:side]
    arg = freq[:, None, None] * (np.cos(theta)[:, None, None] * xx + np.sin(theta)[:, None, None] * yy)
    x = np.sin(arg + phase[:, None, None]) + noise * rng.normal(size=arg.shape)
    return Dataset(x.reshape(labels.size, -1), labels.astype(np.int64), image_shape=(1, side, side),
                   num_classes=classes)


def sample_subset(ds: Dataset, n: int, seed: int) -> Dataset:
    """Uniform sample without replacement (no stratification)."""
    if not 1 <= n <= ds.M:
        raise ValidationError(f"cannot sample {n} of {ds.M} rows")
    rng = np.random.default_rng(seed)
    return ds.subset(np.sort(rng.choice(ds.M, size=n, replace=False)))


def batch_iter(ds: Dataset, batch_size: int, seed: int, as_images: bool = False) -> Iterator[Batch]:
    """Seeded shuffle then contiguous slices; the last batch may be short."""
    if batch_size < 1:
        raise ValidationError(f"batch_size must be >= 1, got {batch_size}")
    order = np.random.default_rng(seed).permutation(ds.M)
    for i, start in enumerate(range(0, ds.M, batch_size)):
        idx = order[start:start + batch_size]
        x = ds.images(idx) if as_images else ds.samples[idx]
        yield Batch(x, ds.labels[idx], i)


# ---------------------------------------------------------------- IDX files

def _read_idx(raw: bytes, expected_magic: int, what: str) -> np.ndarray:
    if len(raw) < 8:
        raise LengthError(f"{what}: file too short ({len(raw)} bytes) for an IDX header")
    magic = struct.unpack(">I", raw[:4])[0]
    if magic != expected_magic:
        raise FormatError(f"{what}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise LengthError(f"{what}: truncated header, need {header} bytes, have {len(raw)}")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    need = header + int(np.prod(dims))
    if len(raw) < need:
        raise LengthError(f"{what}: truncated payload, need {need} bytes, have {len(raw)}")
    if len(raw) > need:
        raise LengthError(f"{what}: {len(raw) - need} trailing bytes after payload")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def parse_idx_images(raw: bytes) -> np.ndarray:
    return _read_idx(raw, IMAGE_MAGIC, "images")


def parse_idx_labels(raw: bytes) -> np.ndarray:
    return _read_idx(raw, LABEL_MAGIC, "labels")


def write_idx(array: np.ndarray) -> bytes:
    """Encode a uint8 array of rank 1 (labels) or 3 (images) as IDX bytes."""
    array = np.asarray(array, dtype=np.uint8)
    if array.ndim not in (1, 3):
        raise ValidationError(f"IDX writer supports rank 1 or 3, got {array.ndim}")
    magic = 0x00000800 | array.ndim
    return struct.pack(f">I{array.ndim}I", magic, *array.shape) + array.tobytes()


def load_idx(path_images, path_labels) -> Dataset:
    images = parse_idx_images(Path(path_images).read_bytes())
    labels = parse_idx_labels(Path(path_labels).read_bytes())
    if images.shape[0] != labels.shape[0]:
        raise ConsistencyError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    n, h, w = images.shape
    x = images.reshape(n, h * w).astype(np.float64) / 255.0
    y = labels.astype(np.int64)
    return Dataset(x, y, image_shape=(1, h, w), num_classes=int(y.max()) + 1 if n else None)


# ------------------------------------------------------------ data specs

DEFAULT_DATA = "gratings:classes=10,per_class=300,side=8,noise=1.0,seed=0"

_SYNTH = {
    "gratings": (synth_gratings, {"classes": int, "per_class": int, "side": int, "noise": float,
                                  "seed": int, "orientations": int}),
    "clusters": (synth_clusters, {"classes": int, "per_class": int, "d": int, "spread": float, "seed": int}),
}


def parse_data_spec(text: str) -> tuple:
    """Split ``kind:key=value,...`` into (kind, options).

    ``idx:IMAGES,LABELS`` names a pair of IDX files instead of options.
    """
    kind, _, rest = text.partition(":")
    if kind == "idx":
        paths = rest.split(",")
        if len(paths) != 2 or not all(paths):
            raise ValidationError(f"idx data spec needs two comma-separated paths, got {rest!r}")
        return kind, {"images": paths[0], "labels": paths[1]}
    if kind not in _SYNTH:
        raise ValidationError(f"unknown data kind {kind!r}; known: idx, {', '.join(sorted(_SYNTH))}")
    fn, types = _SYNTH[kind]
    opts = {}
    for item in filter(None, rest.split(",")):
        key, eq, value = item.partition("=")
        if not eq or key not in types:
            raise ValidationError(f"bad option {item!r} for {kind}; known: {sorted(types)}")
        try:
            opts[key] = types[key](value)
        except ValueError:
            raise ValidationError(f"option {key} needs a {types[key].__name__}, got {value!r}") from None
    return kind, opts


def load_data_spec(text: str = DEFAULT_DATA, train_fraction: float = 0.8) -> tuple:
    """Build (train, test) from a data spec, standardized with training statistics."""
    kind, opts = parse_data_spec(text)
    if kind == "idx":
        ds = load_idx(opts["images"], opts["labels"])
    elif kind == "gratings":
        base = dict(classes=10, per_class=300, side=8, noise=1.0, seed=0)
        base.update(opts)
        ds = synth_gratings(**base)
    else:
        base = dict(classes=10, per_class=100, d=64, spread=0.1, seed=0)
        base.update(opts)
        side = int(round(np.sqrt(base["d"])))
        shape = (1, side, side) if side * side == base["d"] else None
        ds = synth_clusters(image_shape=shape, **base)
    if not 0 < train_fraction < 1:
        raise ValidationError(f"train fraction must lie in (0, 1), got {train_fraction}")
    n_train = int(round(train_fraction * ds.M))
    if not 1 <= n_train < ds.M:
        raise ValidationError(f"cannot split {ds.M} samples at fraction {train_fraction}")
    train, test = ds.split(n_train)
    train, stats = standardize(train)
    test, _ = standardize(test, stats)
    return train, test
