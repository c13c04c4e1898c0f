"""Desk-scale datasets: seeded synthetic generators and simple file loaders.

All generators are pure functions of their arguments (seed included);
loaders never mutate files and report parse errors with their location.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError


@dataclass
class Dataset:
    """Features, integer labels and a train/validation index split."""

    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    train_indices: np.ndarray
    val_indices: np.ndarray
    label_mapping: dict = field(default_factory=dict)  # original -> dense

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.features) != len(self.labels):
            raise ConfigError(
                f"{len(self.features)} feature rows vs {len(self.labels)} labels"
            )
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise ConfigError(f"labels must lie in [0, {self.n_classes})")

    @property
    def n(self) -> int:
        return len(self.labels)

    def train_xy(self):
        return self.features[self.train_indices], self.labels[self.train_indices]

    def val_xy(self):
        return self.features[self.val_indices], self.labels[self.val_indices]


def _unsplit(features, labels, n_classes, mapping=None) -> Dataset:
    return Dataset(
        features,
        labels,
        n_classes,
        train_indices=np.arange(len(labels)),
        val_indices=np.arange(0),
        label_mapping=mapping or {},
    )


def _balanced_counts(n: int, k: int) -> list[int]:
    return [n // k + (1 if c < n % k else 0) for c in range(k)]


def gen_blobs(n: int, n_classes: int, dim: int, spread: float, seed: int) -> Dataset:
    """Isotropic Gaussian clusters with seeded centers.

    ``spread`` is the cluster standard deviation relative to the seeded
    center layout, so it directly controls class overlap.
    """
    if n < n_classes or n_classes < 2 or dim < 1:
        raise ConfigError(f"bad blob sizes: n={n}, classes={n_classes}, dim={dim}")
    if spread <= 0:
        raise ConfigError(f"spread must be > 0, got {spread}")
    rng = np.random.default_rng(seed)
    centers = 2.0 * rng.standard_normal((n_classes, dim))
    counts = _balanced_counts(n, n_classes)
    features = np.concatenate(
        [centers[c] + spread * rng.standard_normal((counts[c], dim)) for c in range(n_classes)]
    )
    labels = np.concatenate([np.full(counts[c], c, dtype=np.int64) for c in range(n_classes)])
    order = rng.permutation(n)
    return _unsplit(features[order], labels[order], n_classes)


def gen_moons(n: int, noise: float, seed: int) -> Dataset:
    """Two interleaved half circles in 2D."""
    if n < 2:
        raise ConfigError(f"need n >= 2, got {n}")
    if noise < 0:
        raise ConfigError(f"noise must be >= 0, got {noise}")
    rng = np.random.default_rng(seed)
    n0 = n // 2
    n1 = n - n0
    t0 = np.linspace(0.0, np.pi, n0)
    t1 = np.linspace(0.0, np.pi, n1)
    pts = np.concatenate(
        [
            np.column_stack([np.cos(t0), np.sin(t0)]),
            np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)]),
        ]
    )
    pts += noise * rng.standard_normal(pts.shape)
    labels = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    order = rng.permutation(n)
    return _unsplit(pts[order], labels[order], 2)


def gen_spirals(n: int, noise: float, seed: int) -> Dataset:
    """Two interleaved spiral arms in 2D."""
    if n < 2:
        raise ConfigError(f"need n >= 2, got {n}")
    if noise < 0:
        raise ConfigError(f"noise must be >= 0, got {noise}")
    rng = np.random.default_rng(seed)
    n0 = n // 2
    n1 = n - n0
    parts = []
    for k, m in ((0, n0), (1, n1)):
        t = np.linspace(0.05, 1.0, m)
        theta = 3.0 * np.pi * t + k * np.pi
        r = t
        arm = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
        parts.append(arm + noise * rng.standard_normal(arm.shape))
    pts = np.concatenate(parts)
    labels = np.concatenate([np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)])
    order = rng.permutation(n)
    return _unsplit(pts[order], labels[order], 2)


def load_csv(path: str, label_column: str) -> Dataset:
    """Rectangular numeric CSV with a header row.

    Labels are parsed as integers and densely re-indexed to 0..K-1;
    the original-to-dense mapping is kept on the dataset. Line numbers in
    errors count from 1 (the header is line 1).
    """
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"{path}: file is empty") from None
        if label_column not in header:
            raise ConfigError(f"{path}: no column named {label_column!r} in header {header}")
        label_idx = header.index(label_column)
        feature_idx = [i for i in range(len(header)) if i != label_idx]
        if not feature_idx:
            raise ConfigError(f"{path}: no feature columns besides {label_column!r}")
        rows, raw_labels = [], []
        for line_no, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ConfigError(
                    f"{path}: row at line {line_no} has {len(row)} columns, expected {len(header)}"
                )
            try:
                rows.append([float(row[i]) for i in feature_idx])
            except ValueError:
                bad = next(i for i in feature_idx if not _is_float(row[i]))
                raise ConfigError(
                    f"{path}: non-numeric value {row[bad]!r} at line {line_no}, "
                    f"column {header[bad]!r}"
                ) from None
            raw_labels.append(_parse_int_label(row[label_idx], path, line_no, label_column))
    if not rows:
        raise ConfigError(f"{path}: no data rows")
    uniques = sorted(set(raw_labels))
    mapping = {orig: dense for dense, orig in enumerate(uniques)}
    labels = np.array([mapping[v] for v in raw_labels], dtype=np.int64)
    return _unsplit(np.array(rows, dtype=np.float64), labels, len(uniques), mapping)


def _is_float(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def _parse_int_label(cell: str, path: str, line_no: int, column: str) -> int:
    try:
        value = float(cell)
    except ValueError:
        raise ConfigError(
            f"{path}: non-numeric label {cell!r} at line {line_no}, column {column!r}"
        ) from None
    if value != int(value):
        raise ConfigError(
            f"{path}: label {cell!r} at line {line_no} is not an integer"
        )
    return int(value)


_IDX_IMAGES_MAGIC = 0x00000803
_IDX_LABELS_MAGIC = 0x00000801


def _read_idx(path: str, magic: int, ndim: int) -> np.ndarray:
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < 4 + 4 * ndim:
        raise ConfigError(f"{path}: truncated IDX header")
    found = struct.unpack(">I", raw[:4])[0]
    if found != magic:
        raise ConfigError(f"{path}: bad IDX magic 0x{found:08x}, expected 0x{magic:08x}")
    dims = struct.unpack(f">{ndim}I", raw[4 : 4 + 4 * ndim])
    payload = raw[4 + 4 * ndim :]
    expected = int(np.prod(dims))
    if len(payload) != expected:
        raise ConfigError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    return np.frombuffer(payload, dtype=np.uint8).reshape(dims)


def load_idx_images(images_path: str, labels_path: str) -> Dataset:
    """Grayscale images + labels in IDX format (big-endian, unsigned byte).

    Pixels are scaled to [0, 1]; features come out as (N, 1, H, W).
    """
    images = _read_idx(images_path, _IDX_IMAGES_MAGIC, 3)
    labels = _read_idx(labels_path, _IDX_LABELS_MAGIC, 1)
    if len(images) != len(labels):
        raise ConfigError(
            f"{images_path} has {len(images)} images but {labels_path} has "
            f"{len(labels)} labels"
        )
    n, h, w = images.shape
    features = (images.astype(np.float64) / 255.0).reshape(n, 1, h, w)
    return _unsplit(features, labels.astype(np.int64), int(labels.max()) + 1)


def split(dataset: Dataset, val_fraction: float, seed: int) -> Dataset:
    """Stratified train/validation split via a seeded shuffle per class."""
    if not 0.0 < val_fraction < 1.0:
        raise ConfigError(f"val_fraction must be in (0, 1), got {val_fraction}")
    rng = np.random.default_rng(seed)
    val_parts = []
    for c in range(dataset.n_classes):
        rows = np.flatnonzero(dataset.labels == c)
        n_val = int(round(val_fraction * len(rows)))
        if n_val == 0 or n_val == len(rows):
            raise ConfigError(
                f"val_fraction {val_fraction} leaves class {c} empty on one side "
                f"({len(rows)} samples)"
            )
        val_parts.append(rng.permutation(rows)[:n_val])
    val_idx = np.sort(np.concatenate(val_parts))
    mask = np.ones(dataset.n, dtype=bool)
    mask[val_idx] = False
    return replace(dataset, train_indices=np.flatnonzero(mask), val_indices=val_idx)


class Standardizer:
    """Per-feature standardization fitted on one (labeled) subset only."""

    def __init__(self):
        self.mean_ = None
        self.std_ = None

    def fit(self, X) -> "Standardizer":
        X = np.asarray(X, dtype=np.float64).reshape(len(X), -1)
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        self.std_ = np.where(std == 0.0, 1.0, std)
        return self

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        flat = X.reshape(len(X), -1)
        return ((flat - self.mean_) / self.std_).reshape(X.shape)

    def fit_transform(self, X) -> np.ndarray:
        return self.fit(X).transform(X)
