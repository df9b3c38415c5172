"""Synthetic ID/OOD data generation and file ingestion.

All inputs end up in [-1, 1] per coordinate so they live in the same box the
sampler clips to.  Generators are pure functions of their parameters and the
supplied random generator; file loaders normalize on read.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np


class DataFormatError(ValueError):
    """Malformed dataset file (bad header, truncation, count mismatch)."""


@dataclass
class Dataset:
    inputs: np.ndarray                 # n x D, values in [-1, 1]
    labels: Optional[np.ndarray]       # n ints in [0, C), or None for OOD
    split_tag: str                     # id-train | id-test | ood
    name: str

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        if self.inputs.ndim != 2:
            raise ValueError(f"inputs must be n x D, got shape {self.inputs.shape}")
        if self.inputs.size and (np.abs(self.inputs) > 1.0 + 1e-12).any():
            raise ValueError("inputs outside [-1, 1]")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.inputs.shape[0],):
                raise ValueError("label count does not match input rows")
            if self.labels.size and self.labels.min() < 0:
                raise ValueError("negative label")

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def dim(self) -> int:
        return self.inputs.shape[1]


def _minmax_to_unit_box(points: np.ndarray) -> np.ndarray:
    lo = points.min(axis=0)
    hi = points.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    return 2.0 * (points - lo) / span - 1.0


def gen_moons(n: int, noise_std: float, rng: np.random.Generator,
              split_tag: str = "id-train") -> Dataset:
    """Two interleaved half-circles with Gaussian jitter, min-max scaled."""
    if n < 2 or n % 2:
        raise ValueError(f"n must be even and >= 2, got {n}")
    half = n // 2
    t = np.linspace(0.0, np.pi, half)
    upper = np.column_stack([np.cos(t), np.sin(t)])
    lower = np.column_stack([1.0 - np.cos(t), 0.5 - np.sin(t)])
    points = np.vstack([upper, lower])
    if noise_std > 0.0:
        points = points + rng.normal(0.0, noise_std, size=points.shape)
    labels = np.concatenate([np.zeros(half, np.int64), np.ones(half, np.int64)])
    perm = rng.permutation(n)
    return Dataset(_minmax_to_unit_box(points)[perm], labels[perm],
                   split_tag, "moons")


def gen_gaussian_mixture(n: int, centers: Sequence[Sequence[float]], std: float,
                         rng: np.random.Generator,
                         split_tag: str = "id-train") -> Dataset:
    """Equal-count Gaussian clusters around the given centers, clipped."""
    centers = np.asarray(centers, dtype=np.float64)
    if centers.ndim != 2 or centers.shape[0] < 2:
        raise ValueError("need at least two centers")
    if (np.abs(centers) >= 1.0).any():
        raise ValueError("centers must lie strictly inside (-1, 1)^D")
    k = centers.shape[0]
    counts = [n // k + (1 if i < n % k else 0) for i in range(k)]
    chunks, labels = [], []
    for i, (center, count) in enumerate(zip(centers, counts)):
        pts = np.tile(center, (count, 1))
        if std > 0.0:
            pts = pts + rng.normal(0.0, std, size=pts.shape)
        chunks.append(pts)
        labels.append(np.full(count, i, np.int64))
    points = np.clip(np.vstack(chunks), -1.0, 1.0)
    labels = np.concatenate(labels)
    perm = rng.permutation(n)
    return Dataset(points[perm], labels[perm], split_tag, "gaussian-mixture")


def gen_ood_ring(n: int, radius: float, width: float,
                 rng: np.random.Generator) -> Dataset:
    """Unlabeled annulus in the plane, radii in [radius-w/2, radius+w/2]."""
    if not 0.0 < radius <= 1.0:
        raise ValueError(f"radius must lie in (0, 1], got {radius}")
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
    r = rng.uniform(radius - width / 2.0, radius + width / 2.0, size=n)
    points = np.clip(np.column_stack([r * np.cos(theta), r * np.sin(theta)]),
                     -1.0, 1.0)
    return Dataset(points, None, "ood", "ring")


def gen_uniform_box(n: int, dim: int, rng: np.random.Generator) -> Dataset:
    """Unlabeled uniform samples over the whole [-1, 1]^dim box."""
    return Dataset(rng.uniform(-1.0, 1.0, size=(n, dim)), None, "ood", "uniform")


def train_test_split(ds: Dataset, test_fraction: float,
                     rng: np.random.Generator) -> Tuple[Dataset, Dataset]:
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    n = len(ds)
    n_test = max(1, int(round(n * test_fraction)))
    perm = rng.permutation(n)
    test_idx, train_idx = perm[:n_test], perm[n_test:]

    def take(idx, tag):
        labels = ds.labels[idx] if ds.labels is not None else None
        return Dataset(ds.inputs[idx], labels, tag, ds.name)
    return take(train_idx, "id-train"), take(test_idx, "id-test")


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def save_csv(ds: Dataset, path) -> None:
    path = Path(path)
    cols = [f"x{i}" for i in range(ds.dim)]
    if ds.labels is not None:
        cols.append("label")
    lines = [",".join(cols)]
    for i in range(len(ds)):
        cells = [repr(float(v)) for v in ds.inputs[i]]
        if ds.labels is not None:
            cells.append(str(int(ds.labels[i])))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")


def load_csv(path, split_tag: str = "id-train", name: Optional[str] = None) -> Dataset:
    """Read ``x0..x{D-1}[,label]`` rows; errors carry the offending line."""
    path = Path(path)
    lines = path.read_text().splitlines()
    if not lines:
        raise DataFormatError(f"{path}: empty file")
    header = [c.strip() for c in lines[0].split(",")]
    has_label = header[-1] == "label"
    feature_cols = header[:-1] if has_label else header
    expected = [f"x{i}" for i in range(len(feature_cols))]
    if feature_cols != expected:
        raise DataFormatError(
            f"{path}: line 1: header must be x0..x{{D-1}}[,label], got {header}")
    dim = len(feature_cols)

    rows: List[List[float]] = []
    labels: List[int] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != len(header):
            raise DataFormatError(
                f"{path}: line {lineno}: expected {len(header)} cells, got {len(cells)}")
        try:
            rows.append([float(c) for c in cells[:dim]])
            if has_label:
                labels.append(int(cells[dim]))
        except ValueError as exc:
            raise DataFormatError(f"{path}: line {lineno}: {exc}") from None
    inputs = np.asarray(rows, dtype=np.float64).reshape(len(rows), dim)
    return Dataset(inputs, np.asarray(labels, np.int64) if has_label else None,
                   split_tag, name or path.stem)


# ---------------------------------------------------------------------------
# IDX (big-endian binary image/label pairs)
# ---------------------------------------------------------------------------

_IDX_IMAGE_MAGIC = 0x00000803
_IDX_LABEL_MAGIC = 0x00000801


def _read_exact(blob: bytes, offset: int, count: int, path, what: str) -> bytes:
    if offset + count > len(blob):
        raise DataFormatError(
            f"{path}: truncated while reading {what}: expected {offset + count} "
            f"bytes, file has {len(blob)}")
    return blob[offset:offset + count]


def load_idx(images_path, labels_path, split_tag: str = "id-train") -> Dataset:
    """Load an image/label IDX pair, mapping bytes [0,255] onto [-1, 1]."""
    images_path, labels_path = Path(images_path), Path(labels_path)

    blob = images_path.read_bytes()
    magic, n_images = struct.unpack(">II", _read_exact(blob, 0, 8, images_path, "header"))
    if magic != _IDX_IMAGE_MAGIC:
        raise DataFormatError(
            f"{images_path}: bad image magic 0x{magic:08x}, expected 0x{_IDX_IMAGE_MAGIC:08x}")
    rows, cols = struct.unpack(">II", _read_exact(blob, 8, 8, images_path, "dims"))
    payload = _read_exact(blob, 16, n_images * rows * cols, images_path, "pixels")
    pixels = np.frombuffer(payload, dtype=np.uint8).astype(np.float64)
    inputs = (pixels * 2.0 / 255.0 - 1.0).reshape(n_images, rows * cols)

    blob = labels_path.read_bytes()
    magic, n_labels = struct.unpack(">II", _read_exact(blob, 0, 8, labels_path, "header"))
    if magic != _IDX_LABEL_MAGIC:
        raise DataFormatError(
            f"{labels_path}: bad label magic 0x{magic:08x}, expected 0x{_IDX_LABEL_MAGIC:08x}")
    labels = np.frombuffer(_read_exact(blob, 8, n_labels, labels_path, "labels"),
                           dtype=np.uint8).astype(np.int64)

    if n_images != n_labels:
        raise DataFormatError(
            f"{images_path}: {n_images} images but {labels_path} holds {n_labels} labels")
    return Dataset(inputs, labels, split_tag, images_path.stem)
