"""Datasets: CSV ingestion, [-1, 1] feature scaling and synthetic generators."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

SYNTHETIC_CASES = ("i", "ii", "iii", "iv")
MISSING_TOKENS = {"", "?", "na", "nan", "null", "none"}


class DataError(ValueError):
    """Raised for unreadable or malformed input data."""


@dataclass(frozen=True)
class Dataset:
    """m samples in n dimensions, with optional integer class labels.

    Arrays are copied and made read-only on construction.
    """

    points: np.ndarray
    labels: Optional[np.ndarray] = None
    name: str = "data"
    dropped_rows: int = 0

    def __post_init__(self):
        pts = np.array(self.points, dtype=float, copy=True)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise DataError(f"points must be a non-empty 2-D array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise DataError("points contain NaN or Inf")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.labels is not None:
            lab = np.array(self.labels, dtype=np.int64, copy=True)
            if lab.shape != (pts.shape[0],):
                raise DataError(f"labels must have length {pts.shape[0]}, got shape {lab.shape}")
            if lab.min() != 0 or np.unique(lab).size != lab.max() + 1:
                raise DataError("labels must be contiguous integers starting at 0")
            lab.setflags(write=False)
            object.__setattr__(self, "labels", lab)

    @property
    def m(self) -> int:
        return self.points.shape[0]

    @property
    def n(self) -> int:
        return self.points.shape[1]

    @property
    def n_classes(self) -> Optional[int]:
        return None if self.labels is None else int(self.labels.max()) + 1

    def with_points(self, points: np.ndarray) -> "Dataset":
        return Dataset(points, self.labels, self.name, self.dropped_rows)


@dataclass(frozen=True)
class ScalingTransform:
    """Per-feature affine map onto [-1, 1]: ``y = (x - offset) / scale - 1``.

    Constant features use ``scale = 1`` and ``offset = value - 1`` so they map to 0.
    """

    offset: np.ndarray
    scale: np.ndarray
    constant: np.ndarray = field(default=None)

    def apply(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=float) - self.offset) / self.scale - 1.0

    def invert(self, scaled: np.ndarray) -> np.ndarray:
        return (np.asarray(scaled, dtype=float) + 1.0) * self.scale + self.offset

    def is_identity(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.abs(self.offset + self.scale) <= tol)
                    and np.all(np.abs(self.scale - 1.0) <= tol))


def fit_scale(data: Dataset) -> tuple[ScalingTransform, Dataset]:
    """Fit and apply the per-feature [-1, 1] scaling.

    The minimum of every non-constant feature maps to exactly -1 and the
    maximum to exactly +1; constant features map to 0.
    """
    lo = data.points.min(axis=0)
    hi = data.points.max(axis=0)
    constant = hi == lo
    half = np.where(constant, 1.0, (hi - lo) / 2.0)
    offset = np.where(constant, lo - 1.0, lo)
    tr = ScalingTransform(offset=offset, scale=half, constant=constant)
    scaled = tr.apply(data.points)
    # (x - (c - 1)) / 1 - 1 is not always exactly 0 in floating point
    scaled[:, constant] = 0.0
    return tr, data.with_points(scaled)


def scale_dataset(data: Dataset) -> Dataset:
    return fit_scale(data)[1]


def _parse_float(cell: str) -> Optional[float]:
    s = cell.strip()
    if s.lower() in MISSING_TOKENS:
        return None
    try:
        v = float(s)
    except ValueError:
        return None
    return v if np.isfinite(v) else None


def _encode_labels(raw: Sequence[str]) -> np.ndarray:
    values = [s.strip() for s in raw]
    try:
        keys = sorted(set(values), key=float)
    except ValueError:
        keys = sorted(set(values))
    index = {v: i for i, v in enumerate(keys)}
    return np.array([index[v] for v in values], dtype=np.int64)


def load_csv(path, label_column: Optional[int] = None,
             drop_columns: Sequence[int] = (), name: Optional[str] = None) -> Dataset:
    """Read a comma-separated numeric table.

    Parameters
    ----------
    path : str or Path
        File to read. A header row is detected when the first row contains
        a cell that does not parse as a number (the label cell excluded).
    label_column : int, optional
        Column holding class labels (negative indices count from the end).
        Labels may be arbitrary strings; they are encoded as 0..k-1 in sorted
        order (numeric order when all labels are numbers).
    drop_columns : sequence of int
        Columns to ignore entirely, e.g. a sample-id column.

    Rows with a missing or unparseable feature cell are dropped; the count is
    logged and stored in ``Dataset.dropped_rows``.
    """
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path} contains no rows")
    ncol = len(rows[0])
    if any(len(r) != ncol for r in rows):
        raise DataError(f"{path}: rows have non-uniform column counts")

    def norm(col: int) -> int:
        c = col + ncol if col < 0 else col
        if not 0 <= c < ncol:
            raise DataError(f"column {col} out of range for {ncol} columns")
        return c

    lab_col = None if label_column is None else norm(label_column)
    skip = {norm(c) for c in drop_columns}
    feat_cols = [c for c in range(ncol) if c != lab_col and c not in skip]
    if not feat_cols:
        raise DataError("no feature columns left")

    if any(_parse_float(rows[0][c]) is None and rows[0][c].strip().lower() not in MISSING_TOKENS
           for c in feat_cols):
        rows = rows[1:]

    feats, labels, dropped = [], [], 0
    for r in rows:
        vals = [_parse_float(r[c]) for c in feat_cols]
        if any(v is None for v in vals) or (lab_col is not None and r[lab_col].strip().lower() in MISSING_TOKENS):
            dropped += 1
            continue
        feats.append(vals)
        if lab_col is not None:
            labels.append(r[lab_col])
    if not feats:
        raise DataError(f"{path}: zero usable rows")
    if dropped:
        logger.info("%s: dropped %d rows with missing values", path.name, dropped)
    return Dataset(np.array(feats, dtype=float),
                   _encode_labels(labels) if lab_col is not None else None,
                   name or path.stem, dropped)


def write_csv(data: Dataset, path) -> None:
    """Write one sample per row, features then label, 17 significant digits."""
    path = Path(path)
    header = [f"x{j}" for j in range(data.n)] + (["label"] if data.labels is not None else [])
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(data.m):
            row = [format(v, ".17g") for v in data.points[i]]
            if data.labels is not None:
                row.append(str(int(data.labels[i])))
            w.writerow(row)


@dataclass(frozen=True)
class SyntheticSpec:
    case: str
    seed: int = 0

    def __post_init__(self):
        if self.case not in SYNTHETIC_CASES:
            raise DataError(f"unknown synthetic case {self.case!r}; expected one of {SYNTHETIC_CASES}")


def _gaussian(rng: np.random.Generator, mean, var, size: int) -> np.ndarray:
    mean = np.asarray(mean, dtype=float)
    std = np.sqrt(np.broadcast_to(np.asarray(var, dtype=float), mean.shape))
    return mean + std * rng.standard_normal((size, mean.size))


def generate_synthetic(spec: SyntheticSpec, sizes: Optional[Sequence[int]] = None) -> Dataset:
    """Draw one of the synthetic benchmark datasets (unscaled).

    ``sizes`` overrides the per-cluster sample counts for cases i-iii; it
    exists for statistical tests and is not part of the benchmark protocol.
    """
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    case = spec.case
    if case == "i":
        means, variances, counts = [(0, 0), (1, 1)], [0.33 ** 2, 0.33 ** 2], [50, 50]
    elif case == "ii":
        means, variances, counts = [(0, 5), (2.5, 0)], [(0.05, 5), (0.3, 0.05)], [500, 50]
    elif case == "iii":
        means, variances, counts = [(0, 0), (7, 0)], [4.0, 0.5], [500, 50]
    else:
        while True:
            centers = _gaussian(rng, np.zeros(3), 5.0, 4)
            gaps = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=-1)
            if gaps[np.triu_indices(4, 1)].min() >= 1.0:
                break
        means = list(centers)
        variances = [1.0] * 4
        counts = list(rng.integers(10, 100, size=4, endpoint=True))
    if sizes is not None:
        if len(sizes) != len(counts):
            raise DataError(f"case {case} has {len(counts)} clusters, got {len(sizes)} sizes")
        counts = list(sizes)
    blocks = [_gaussian(rng, mu, var, int(c)) for mu, var, c in zip(means, variances, counts)]
    labels = np.repeat(np.arange(len(counts)), counts)
    return Dataset(np.vstack(blocks), labels, f"case_{case}_seed{spec.seed}")
