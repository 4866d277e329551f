"""Task-free stream construction.

A stream delivers the data as a sequence of small batches; segment
boundaries (the hidden "tasks") are never exposed to the consumer, and
batches may straddle them.  Sources are IDX image files or synthetic
Gaussian modes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FormatError, InputError
from .memory import Sample

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    """Feature matrix with integer labels; IDX pixels are scaled to [0, 1]."""

    features: np.ndarray
    labels: np.ndarray
    class_count: int

    def __post_init__(self):
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise InputError("features must be (n, d) with one label per row")
        if self.labels.size and self.labels.max() >= self.class_count:
            raise InputError("label outside class range")

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass
class StreamSpec:
    """Descriptive record of how a stream was built: ordered segments of
    (class set or mode index, sample count), plus batching settings."""

    source: str
    segments: list[tuple[tuple[int, ...], int]]
    batch_size: int
    shuffle_within_segment: bool = True
    seed: int = 0


class Stream:
    """Single-consumer batch iterator; previously returned batches are gone."""

    def __init__(self, features: np.ndarray, labels: np.ndarray, spec: StreamSpec):
        if spec.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        self.spec = spec
        self._features = features
        self._labels = labels
        self._cursor = 0
        self._step = 0

    def __len__(self) -> int:
        return self._features.shape[0]

    @property
    def step(self) -> int:
        return self._step

    def next_batch(self) -> list[Sample] | None:
        """The next <= batch_size samples, or None at end of stream."""
        if self._cursor >= self._features.shape[0]:
            return None
        end = min(self._cursor + self.spec.batch_size, self._features.shape[0])
        batch = [
            Sample(
                features=self._features[i],
                label=int(self._labels[i]),
                arrival_step=self._step,
            )
            for i in range(self._cursor, end)
        ]
        self._cursor = end
        self._step += 1
        return batch


def _read_be_u32(data: bytes, offset: int, path: str) -> int:
    if offset + 4 > len(data):
        raise FormatError(f"{path}: truncated header at byte {offset}")
    return struct.unpack_from(">I", data, offset)[0]


def load_idx(images_path: str, labels_path: str) -> Dataset:
    """Load an IDX image/label file pair (big-endian, magic-checked).

    Pixels are flattened row-major and scaled by 1/255.
    """
    with open(images_path, "rb") as f:
        raw = f.read()
    magic = _read_be_u32(raw, 0, images_path)
    if magic != IDX_IMAGES_MAGIC:
        raise FormatError(
            f"{images_path}: bad images magic 0x{magic:08x} at byte 0, "
            f"expected 0x{IDX_IMAGES_MAGIC:08x}"
        )
    n = _read_be_u32(raw, 4, images_path)
    rows = _read_be_u32(raw, 8, images_path)
    cols = _read_be_u32(raw, 12, images_path)
    expected = 16 + n * rows * cols
    if len(raw) < expected:
        raise FormatError(f"{images_path}: truncated at byte {len(raw)}, expected {expected}")
    pixels = np.frombuffer(raw, dtype=np.uint8, count=n * rows * cols, offset=16)
    features = pixels.reshape(n, rows * cols).astype(np.float64) / 255.0

    with open(labels_path, "rb") as f:
        raw_l = f.read()
    magic_l = _read_be_u32(raw_l, 0, labels_path)
    if magic_l != IDX_LABELS_MAGIC:
        raise FormatError(
            f"{labels_path}: bad labels magic 0x{magic_l:08x} at byte 0, "
            f"expected 0x{IDX_LABELS_MAGIC:08x}"
        )
    n_labels = _read_be_u32(raw_l, 4, labels_path)
    if n_labels != n:
        raise FormatError(f"{labels_path}: {n_labels} labels for {n} images")
    if len(raw_l) < 8 + n:
        raise FormatError(f"{labels_path}: truncated at byte {len(raw_l)}, expected {8 + n}")
    labels = np.frombuffer(raw_l, dtype=np.uint8, count=n, offset=8).astype(np.int64)
    return Dataset(features=features, labels=labels, class_count=int(labels.max()) + 1 if n else 0)


def downsample_images(features: np.ndarray, side: int, factor: int) -> np.ndarray:
    """Average-pool square images (rows of side*side pixels) by `factor`."""
    if side % factor != 0:
        raise ConfigError(f"side {side} not divisible by factor {factor}")
    n = features.shape[0]
    out_side = side // factor
    imgs = features.reshape(n, out_side, factor, out_side, factor)
    return imgs.mean(axis=(2, 4)).reshape(n, out_side * out_side)


def build_split_stream(
    dataset: Dataset,
    classes_per_task: int,
    batch_size: int = 10,
    seed: int = 0,
    shuffle_within_segment: bool = True,
) -> Stream:
    """Consecutive-class split of a labeled dataset into one long stream.

    Segment i holds the samples of classes [i*cpt, (i+1)*cpt), shuffled
    within the segment; the consumer sees only batches.
    """
    if dataset.class_count % classes_per_task != 0:
        raise ConfigError(
            f"class count {dataset.class_count} not divisible by {classes_per_task}"
        )
    rng = np.random.default_rng(seed)
    order = []
    segments = []
    for start in range(0, dataset.class_count, classes_per_task):
        classes = tuple(range(start, start + classes_per_task))
        idx = np.flatnonzero(np.isin(dataset.labels, classes))
        if shuffle_within_segment:
            idx = rng.permutation(idx)
        order.append(idx)
        segments.append((classes, int(idx.size)))
    order = np.concatenate(order)
    spec = StreamSpec(
        source="idx_dataset",
        segments=segments,
        batch_size=batch_size,
        shuffle_within_segment=shuffle_within_segment,
        seed=seed,
    )
    return Stream(dataset.features[order], dataset.labels[order], spec)


def default_mode_means(k_modes: int, dim: int, distance: float) -> np.ndarray:
    """Mode centers placed `distance` apart along successive axes."""
    means = np.zeros((k_modes, dim))
    for k in range(1, k_modes):
        means[k] = means[k - 1]
        means[k, (k - 1) % dim] += distance
    return means


def synthetic_gaussian_stream(
    k_modes: int,
    dim: int,
    means: np.ndarray,
    cov_scale: float,
    per_mode: int | list[int],
    batch_size: int,
    seed: int,
) -> Stream:
    """Stream of k Gaussian modes visited in order; labels are mode ids.

    per_mode may be a single count shared by all modes or one count per
    mode.
    """
    if k_modes < 1:
        raise ConfigError("need k_modes >= 1")
    means = np.asarray(means, dtype=np.float64)
    if means.shape != (k_modes, dim):
        raise ConfigError(f"means shape {means.shape} != ({k_modes}, {dim})")
    counts = [per_mode] * k_modes if np.isscalar(per_mode) else list(per_mode)
    if len(counts) != k_modes or any(c < 1 for c in counts):
        raise ConfigError("need one positive sample count per mode")
    rng = np.random.default_rng(seed)
    features = np.vstack(
        [means[k] + cov_scale * rng.standard_normal((counts[k], dim)) for k in range(k_modes)]
    )
    labels = np.repeat(np.arange(k_modes), counts)
    spec = StreamSpec(
        source="synthetic_gaussian",
        segments=[((k,), counts[k]) for k in range(k_modes)],
        batch_size=batch_size,
        shuffle_within_segment=False,
        seed=seed,
    )
    return Stream(features, labels, spec)


def synthetic_gaussian_dataset(
    k_modes: int, dim: int, means: np.ndarray, cov_scale: float, per_mode: int, seed: int
) -> Dataset:
    """Held-out draw from the same modes, for end-of-stream evaluation."""
    rng = np.random.default_rng(seed)
    means = np.asarray(means, dtype=np.float64)
    features = np.vstack(
        [means[k] + cov_scale * rng.standard_normal((per_mode, dim)) for k in range(k_modes)]
    )
    labels = np.repeat(np.arange(k_modes), per_mode)
    return Dataset(features=features, labels=labels, class_count=k_modes)
