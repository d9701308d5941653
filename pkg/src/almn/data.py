"""Datasets, the classes-by-samples batch sampler, a multimodal synthetic
generator, and CSV / IDX ingestion."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InsufficientClasses,
    InsufficientSamplesInClass,
    LabelFeatureCountMismatch,
    MalformedFile,
)

_IDX_IMAGES_MAGIC = 0x00000803
_IDX_LABELS_MAGIC = 0x00000801


@dataclass
class Dataset:
    """Immutable labeled feature collection with a per-class index."""

    features: np.ndarray  # (N, p) float64
    labels: np.ndarray    # (N,) int64
    class_index: dict[int, np.ndarray] = field(init=False)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise ValueError("features must be (N, p) with one label per row")
        self.class_index = {
            int(z): np.flatnonzero(self.labels == z) for z in np.unique(self.labels)
        }

    @property
    def num_items(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def classes(self) -> list[int]:
        return sorted(self.class_index)


@dataclass(frozen=True)
class BatchSpec:
    """classes-per-batch (m) times samples-per-class (n), plus the sampling seed."""

    m: int
    n: int
    seed: int = 0

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("a batch needs at least two classes")
        if self.n < 1:
            raise ValueError("samples per class must be positive")

    @property
    def size(self) -> int:
        return self.m * self.n


def sample_batch(ds: Dataset, spec: BatchSpec, rng: np.random.Generator) -> np.ndarray:
    """Indices of one random batch: m distinct classes, n distinct items each.

    Class-major layout. The generator is advanced in place and is the
    sampler's only state, so identical generator states give identical
    batches.
    """
    classes = ds.classes
    if len(classes) < spec.m:
        raise InsufficientClasses(
            f"dataset has {len(classes)} classes, batch wants {spec.m}"
        )
    chosen = rng.choice(len(classes), size=spec.m, replace=False)
    out = np.empty(spec.size, dtype=np.int64)
    for k, ci in enumerate(chosen):
        pool = ds.class_index[classes[ci]]
        if pool.size < spec.n:
            raise InsufficientSamplesInClass(
                f"class {classes[ci]} has {pool.size} items, batch wants {spec.n}"
            )
        out[k * spec.n:(k + 1) * spec.n] = rng.choice(pool, size=spec.n, replace=False)
    return out


def gen_multimodal(
    classes: int,
    subclusters_per_class: int,
    points_per_class: int,
    input_dim: int,
    spread: float,
    seed: int,
) -> Dataset:
    """Synthetic heterogeneous dataset: each class is a handful of isotropic
    Gaussian blobs with means drawn uniformly in [-1, 1]^p.

    Points are split as evenly as possible across a class's subclusters.
    Deterministic given the seed.
    """
    if classes < 1 or subclusters_per_class < 1 or points_per_class < 1:
        raise ValueError("counts must be positive")
    if input_dim < 2:
        raise ValueError("input_dim must be at least 2")
    rng = np.random.default_rng(seed)
    feats = np.empty((classes * points_per_class, input_dim))
    labels = np.empty(classes * points_per_class, dtype=np.int64)
    base, extra = divmod(points_per_class, subclusters_per_class)
    row = 0
    for z in range(classes):
        means = rng.uniform(-1.0, 1.0, size=(subclusters_per_class, input_dim))
        for s in range(subclusters_per_class):
            count = base + (1 if s < extra else 0)
            feats[row:row + count] = means[s] + rng.normal(
                0.0, spread, size=(count, input_dim)
            )
            labels[row:row + count] = z
            row += count
    return Dataset(feats, labels)


def split_by_class(ds: Dataset) -> tuple[Dataset, Dataset]:
    """Disjoint-class split: first half of the class ids trains, the rest tests."""
    classes = ds.classes
    half = len(classes) // 2
    train_mask = np.isin(ds.labels, classes[:half])
    return (
        Dataset(ds.features[train_mask], ds.labels[train_mask]),
        Dataset(ds.features[~train_mask], ds.labels[~train_mask]),
    )


def save_csv(ds: Dataset, path) -> None:
    """One row per item: label, then features. repr() keeps floats exact."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for label, row in zip(ds.labels, ds.features):
            f.write(",".join([str(int(label))] + [repr(float(x)) for x in row]))
            f.write("\n")


def load_csv(path) -> Dataset:
    """Parse a label-then-features CSV (no header)."""
    rows = []
    labels = []
    width = None
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) < 2:
                raise MalformedFile(f"{path}: line {lineno}: need a label and features")
            try:
                labels.append(int(parts[0]))
                rows.append([float(p) for p in parts[1:]])
            except ValueError as e:
                raise MalformedFile(f"{path}: line {lineno}: {e}") from None
            if width is None:
                width = len(parts) - 1
            elif len(parts) - 1 != width:
                raise LabelFeatureCountMismatch(
                    f"{path}: line {lineno}: expected {width} features, got {len(parts) - 1}"
                )
    if not rows:
        raise MalformedFile(f"{path}: no data rows")
    return Dataset(np.array(rows), np.array(labels))


def _read_idx_header(buf: bytes, path, expected_magic: int, expected_dims: int):
    if len(buf) < 4 * (1 + expected_dims):
        raise MalformedFile(f"{path}: truncated header at offset {len(buf)}")
    magic = struct.unpack(">i", buf[:4])[0]
    if magic != expected_magic:
        raise MalformedFile(
            f"{path}: offset 0: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}"
        )
    dims = struct.unpack(
        f">{expected_dims}i", buf[4:4 + 4 * expected_dims]
    )
    return dims, 4 * (1 + expected_dims)


def load_idx(images_path, labels_path) -> Dataset:
    """Load an IDX image/label pair; pixel bytes are scaled to [0, 1]."""
    with open(images_path, "rb") as f:
        img_buf = f.read()
    with open(labels_path, "rb") as f:
        lab_buf = f.read()
    (count, rows, cols), offset = _read_idx_header(img_buf, images_path, _IDX_IMAGES_MAGIC, 3)
    expected = count * rows * cols
    if len(img_buf) - offset != expected:
        raise MalformedFile(
            f"{images_path}: offset {offset}: expected {expected} pixel bytes, "
            f"got {len(img_buf) - offset}"
        )
    (lab_count,), lab_offset = _read_idx_header(lab_buf, labels_path, _IDX_LABELS_MAGIC, 1)
    if len(lab_buf) - lab_offset != lab_count:
        raise MalformedFile(
            f"{labels_path}: offset {lab_offset}: expected {lab_count} label bytes, "
            f"got {len(lab_buf) - lab_offset}"
        )
    if lab_count != count:
        raise LabelFeatureCountMismatch(
            f"{count} images but {lab_count} labels"
        )
    pixels = np.frombuffer(img_buf, dtype=np.uint8, offset=offset)
    feats = pixels.reshape(count, rows * cols).astype(np.float64) / 255.0
    labels = np.frombuffer(lab_buf, dtype=np.uint8, offset=lab_offset).astype(np.int64)
    return Dataset(feats, labels)
