"""Selective-prediction evaluation: thresholds, risk-coverage curves, confusion tables.

A *record set* is an :class:`EvalRecords` bundle of parallel arrays, one entry
per sample. Higher ``sel_score`` means "more willing to predict".
Thresholds accept samples with ``sel_score >= tau``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .losses import cross_entropy_per_sample
from .network import forward
from .scores import ScoreKind, score

NA = "NA"
DEFAULT_GRID = tuple(round(0.1 * i, 1) for i in range(1, 11))


@dataclass
class EvalRecords:
    sel_score: np.ndarray
    correct: np.ndarray
    sample_loss: np.ndarray
    region: np.ndarray

    def __post_init__(self):
        self.sel_score = np.asarray(self.sel_score, dtype=np.float64)
        self.correct = np.asarray(self.correct, dtype=bool)
        self.sample_loss = np.asarray(self.sample_loss, dtype=np.float64)
        n = self.sel_score.shape[0]
        self.region = np.full(n, -1, dtype=np.int64) if self.region is None else np.asarray(self.region, dtype=np.int64)
        if any(a.shape != (n,) for a in (self.correct, self.sample_loss, self.region)):
            raise ValueError("record arrays must be 1-D and equally long")
        if not np.all(np.isfinite(self.sel_score)):
            raise ValueError("selection scores must be finite")
        if np.any(self.sample_loss < 0) or not np.all(np.isfinite(self.sample_loss)):
            raise ValueError("sample losses must be finite and >= 0")

    def __len__(self):
        return self.sel_score.shape[0]


@dataclass(frozen=True)
class Metrics:
    coverage: float
    risk: float | None
    accuracy: float | None
    n_accepted: int


@dataclass(frozen=True)
class CurvePoint:
    target: float
    coverage: float
    threshold: float
    risk: float | None
    accuracy: float | None


def parse_mechanism(text):
    """``"head"`` or a :class:`ScoreKind` string such as ``"smp:2.5"``."""
    text = text.strip().lower()
    return "head" if text == "head" else ScoreKind.parse(text)


def collect(model, ds, mechanism="head"):
    """Score every sample of ``ds`` under ``mechanism``.

    ``"head"`` uses the selection head ``g`` of an SN-mode model, and
    ``-p_abstain`` for a DG-mode model. A :class:`ScoreKind` scores the class
    probabilities; for DG models these are renormalised over the C real
    classes first (a monotone rescaling per sample, so the arg-max is
    unchanged).
    """
    if ds.d != model.input_dim:
        raise DataError(f"data has {ds.d} features, model expects {model.input_dim}")
    if ds.C > model.num_classes:
        raise DataError(f"data has labels up to {ds.C - 1}, model has {model.num_classes} classes")
    out = forward(model, ds.X)
    P = out.p
    if model.mode == "DG":
        P = P[:, :-1] / np.sum(P[:, :-1], axis=1, keepdims=True)
    if isinstance(mechanism, str):
        mechanism = parse_mechanism(mechanism)
    if mechanism == "head":
        s = out.g if model.mode == "SN" else -out.dg_abstain
    else:
        s = np.asarray(score(P, mechanism))
    pred = np.argmax(P, axis=1)
    return EvalRecords(s, pred == ds.y, cross_entropy_per_sample(P, ds.y), ds.region)


def n_accept(n, target):
    """Number of top-scored samples a coverage target asks for: ``ceil(c * n)``."""
    if not 0.0 < target <= 1.0:
        raise ValueError(f"target coverage must be in (0, 1], got {target}")
    # round first so that e.g. 0.7 * 1000 = 700.0000000000001 does not become 701
    return min(n, max(1, math.ceil(round(target * n, 9))))


def calibrate_threshold(records, target):
    """Threshold accepting the top ``ceil(target * N)`` scores.

    Distinct neighbours give the midpoint of the k-th and (k+1)-th largest
    scores. If the k-th score is tied with the next one, the threshold sits on
    the tied value and every tied sample is accepted (coverage overshoots).
    ``target == 1`` returns ``-inf``.
    """
    n = len(records)
    if n == 0:
        raise ValueError("cannot calibrate on an empty record set")
    k = n_accept(n, target)
    if k == n:
        return -math.inf
    s = np.sort(records.sel_score)[::-1]
    hi, lo = float(s[k - 1]), float(s[k])
    if hi == lo:
        return hi
    tau = 0.5 * (hi + lo)
    # adjacent doubles: the midpoint can round onto lo
    return tau if tau > lo else hi


def selective_metrics(records, tau):
    n = len(records)
    if n == 0:
        raise ValueError("empty record set")
    acc = records.sel_score >= tau
    k = int(np.sum(acc))
    if k == 0:
        return Metrics(0.0, None, None, 0)
    return Metrics(k / n, float(np.mean(records.sample_loss[acc])), float(np.mean(records.correct[acc])), k)


def _check_grid(grid):
    grid = [float(c) for c in grid]
    if not grid:
        raise ValueError("empty coverage grid")
    if any(not 0.0 < c <= 1.0 for c in grid):
        raise ValueError("grid coverages must lie in (0, 1]")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be strictly increasing")
    return grid


def rc_curve(records, grid=DEFAULT_GRID, calibration=None):
    """Risk-coverage points, one per grid value.

    Thresholds come from :func:`calibrate_threshold` on ``calibration``
    (default: ``records`` themselves, which gives exact top-k coverage).
    """
    cal = records if calibration is None else calibration
    pts = []
    for c in _check_grid(grid):
        tau = calibrate_threshold(cal, c)
        m = selective_metrics(records, tau)
        pts.append(CurvePoint(c, m.coverage, tau, m.risk, m.accuracy))
    return pts


def confusion_table(records, tau):
    """Fractions (accept & correct, accept & wrong, reject & correct, reject & wrong)."""
    n = len(records)
    if n == 0:
        raise ValueError("empty record set")
    acc = records.sel_score >= tau
    ok = records.correct
    counts = (np.sum(acc & ok), np.sum(acc & ~ok), np.sum(~acc & ok), np.sum(~acc & ~ok))
    return tuple(int(c) / n for c in counts)


def region_rejection_rates(records, tau):
    """``{region: rejected fraction}`` for every region label present."""
    rej = records.sel_score < tau
    return {int(r): float(np.mean(rej[records.region == r])) for r in np.unique(records.region)}


def _fmt(v):
    if v is None:
        return NA
    if v == -math.inf:
        return "-inf"
    return f"{v:.6f}"


def rc_rows(points):
    """CSV rows ``coverage,threshold,risk,accuracy`` (no header)."""
    return [",".join(_fmt(v) for v in (p.coverage, p.threshold, p.risk, p.accuracy)) for p in points]


def write_rc_curve(points, path):
    lines = ["coverage,threshold,risk,accuracy"] + rc_rows(points)
    Path(path).write_text("\n".join(lines) + "\n")


def write_confusion(fractions, coverage, path):
    head = "accept_correct,accept_incorrect,reject_correct,reject_incorrect,coverage"
    Path(path).write_text(head + "\n" + ",".join(_fmt(v) for v in (*fractions, coverage)) + "\n")


def write_regions(rates, path):
    lines = ["region,rejection_rate"] + [f"{r},{_fmt(v)}" for r, v in sorted(rates.items())]
    Path(path).write_text("\n".join(lines) + "\n")


def check_mechanism(model, mechanism):
    """Return a note when ``head`` on a DG model means the abstain output."""
    if mechanism == "head" and model.mode == "DG":
        return "head on a DG checkpoint: using -p_abstain as the selection score"
    if mechanism != "head" and not isinstance(mechanism, ScoreKind):
        raise ConfigError(f"unknown mechanism {mechanism!r}")
    return None
