"""Synthetic datasets, CSV I/O and stratified splits."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    region: np.ndarray
    C: int

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        self.region = np.asarray(self.region, dtype=np.int64)
        if self.X.ndim != 2 or self.X.shape[0] < 1:
            raise DataError("dataset needs at least one row")
        n = self.X.shape[0]
        if self.y.shape != (n,) or self.region.shape != (n,):
            raise DataError("X, y and region lengths differ")
        if self.y.min() < 0 or self.y.max() >= self.C:
            raise DataError(f"labels must lie in [0, {self.C})")
        if not np.all(np.isfinite(self.X)):
            raise DataError("features must be finite")

    @property
    def N(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    def subset(self, idx):
        return Dataset(self.X[idx], self.y[idx], self.region[idx], self.C)


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.8
    cal_frac: float = 0.1
    test_frac: float = 0.1
    seed: int = 0

    def __post_init__(self):
        fr = (self.train_frac, self.cal_frac, self.test_frac)
        if any(not 0.0 < f < 1.0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
            raise DataError(f"split fractions must be in (0,1) and sum to 1, got {fr}")

    @property
    def fractions(self):
        return np.array([self.train_frac, self.cal_frac, self.test_frac])


def class_centers(C, d, separation):
    """Cluster centres with minimum pairwise distance ``separation``, centred at 0.

    ``d >= C``: scaled standard basis (a regular simplex, all pairs equal).
    ``2 <= d < C``: regular polygon in the first two coordinates.
    ``d == 1``: evenly spaced points on a line.
    """
    centers = np.zeros((C, d))
    if d >= C:
        centers[:, :C] = np.eye(C) * separation / math.sqrt(2.0)
    elif d >= 2:
        radius = separation / (2.0 * math.sin(math.pi / C))
        ang = 2.0 * math.pi * np.arange(C) / C
        centers[:, 0] = radius * np.cos(ang)
        centers[:, 1] = radius * np.sin(ang)
    else:
        centers[:, 0] = separation * np.arange(C)
    return centers - centers.mean(axis=0)


def _generate(C, per_class, d, separation, noise_frac, seed):
    if C < 2 or per_class < 1 or d < 1:
        raise DataError("need C >= 2, per_class >= 1, d >= 1")
    if separation < 0:
        raise DataError("separation must be nonnegative")
    if not 0.0 <= noise_frac <= 0.5:
        raise DataError("noise_frac must lie in [0, 0.5]")
    rng = np.random.default_rng(seed)
    N = C * per_class
    n_amb = int(round(noise_frac * N))
    centers = class_centers(C, d, separation)
    y_clean = np.arange(N - n_amb) % C
    y_amb = rng.integers(0, C, size=n_amb)
    X_clean = centers[y_clean] + rng.standard_normal((N - n_amb, d))
    # overlap region sits at the common centroid of all classes
    X_amb = rng.standard_normal((n_amb, d))
    X = np.vstack([X_clean, X_amb])
    y = np.concatenate([y_clean, y_amb])
    region = np.concatenate([np.zeros(N - n_amb, dtype=np.int64), np.ones(n_amb, dtype=np.int64)])
    perm = rng.permutation(N)
    return Dataset(X[perm], y[perm], region[perm], C)


def gen_blobs(C, per_class, d, separation, seed):
    """``C`` unit-variance Gaussian clusters, ``per_class`` points each."""
    return _generate(C, per_class, d, separation, 0.0, seed)


def gen_ambiguity(C, per_class, noise_frac, seed, d=None, separation=5.0):
    """Blobs plus an overlap region with uniformly random labels.

    ``d`` defaults to ``C`` so the class centres form a regular simplex and
    every class is equally far from the overlap region.

    ``round(noise_frac * C * per_class)`` rows are drawn from a unit Gaussian
    at the centroid of the class centres and get uniform labels
    (``region == 1``); the remaining rows are clean blob samples, classes
    assigned round-robin. With ``noise_frac = 0`` this is exactly
    :func:`gen_blobs` with the same ``d``/``separation``/``seed``.
    """
    return _generate(C, per_class, C if d is None else d, separation, noise_frac, seed)


def load_csv(path):
    """Read ``f0,...,f{d-1},label[,region]``; region defaults to -1."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        has_region = header[-1] == "region"
        feat = header[:-2] if has_region else header[:-1]
        label_col = len(feat)
        if not feat or header[label_col] != "label" or feat != [f"f{i}" for i in range(len(feat))]:
            raise DataError(f"{path}: header must be f0,...,f{{d-1}},label[,region]")
        width = len(header)
        X, y, region = [], [], []
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != width:
                raise DataError(f"{path}:{line}: expected {width} fields, got {len(row)}")
            try:
                X.append([float(v) for v in row[:label_col]])
            except ValueError:
                raise DataError(f"{path}:{line}: non-numeric feature value") from None
            try:
                y.append(int(row[label_col]))
                region.append(int(row[label_col + 1]) if has_region else -1)
            except ValueError:
                raise DataError(f"{path}:{line}: label/region must be an integer") from None
    if not X:
        raise DataError(f"{path}: no data rows")
    y = np.array(y, dtype=np.int64)
    if y.min() < 0:
        raise DataError(f"{path}: negative label")
    return Dataset(np.array(X), y, np.array(region, dtype=np.int64), int(y.max()) + 1)


def save_csv(ds, path):
    """Write ``ds`` in the CSV schema read by :func:`load_csv` (exact floats)."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{i}" for i in range(ds.d)] + ["label", "region"])
        for x, label, reg in zip(ds.X, ds.y, ds.region):
            w.writerow([repr(float(v)) for v in x] + [int(label), int(reg)])


def _largest_remainder(total, fractions):
    raw = total * fractions
    counts = np.floor(raw).astype(np.int64)
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[: total - counts.sum()]] += 1
    return counts


def split(ds, spec):
    """Stratified, disjoint train/cal/test split.

    Each class gets either ``floor`` or ``ceil`` of its proportional share per
    split. Classes are processed in label order and the extra samples go to
    whichever splits lag furthest behind their overall target, so split sizes
    match the global largest-remainder allocation.
    """
    fr = spec.fractions
    S = len(fr)
    classes, counts = np.unique(ds.y, return_counts=True)
    if counts.min() < S:
        raise DataError(f"class {classes[counts.argmin()]} has {counts.min()} samples, fewer than {S} splits")
    target = _largest_remainder(ds.N, fr)
    rng = np.random.default_rng(spec.seed)
    assigned = np.zeros(S, dtype=np.int64)
    remaining = ds.N
    parts = [[] for _ in range(S)]
    for c, n_c in zip(classes, counts):
        idx = rng.permutation(np.flatnonzero(ds.y == c))
        base = np.floor(n_c * fr).astype(np.int64)
        extra = n_c - base.sum()
        remaining -= n_c
        need = target - assigned - base - fr * remaining
        bonus = np.argsort(-need, kind="stable")[:extra]
        base[bonus] += 1
        pos = 0
        for s in range(S):
            parts[s].append(idx[pos : pos + base[s]])
            pos += base[s]
        assigned += base
    return tuple(ds.subset(np.sort(np.concatenate(p))) for p in parts)
