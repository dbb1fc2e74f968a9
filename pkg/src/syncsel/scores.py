"""Confidence scores on the probability simplex.

All functions accept a single probability vector (shape ``(C,)``) or a batch
(``(B, C)``) and return a float or a ``(B,)`` array respectively.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

SIMPLEX_TOL = 1e-9
LOG_CLAMP = 1e-12


@dataclass(frozen=True)
class ScoreKind:
    kind: str = "sr"
    gamma: float = 1.0

    def __post_init__(self):
        if self.kind not in ("sr", "smp", "negent"):
            raise ConfigError(f"unknown score kind {self.kind!r}")
        if self.kind == "smp" and not self.gamma > 0:
            raise ConfigError(f"SMP exponent must be > 0, got {self.gamma}")

    @classmethod
    def parse(cls, text):
        """Parse ``sr``, ``negent``, ``smp`` or ``smp:<gamma>``."""
        text = text.strip().lower()
        if text.startswith("smp"):
            _, _, g = text.partition(":")
            try:
                return cls("smp", float(g) if g else 1.0)
            except ValueError:
                raise ConfigError(f"bad SMP exponent in {text!r}") from None
        return cls(text)

    def __str__(self):
        return f"smp:{self.gamma:g}" if self.kind == "smp" else self.kind


SR = ScoreKind("sr")
NEG_ENTROPY = ScoreKind("negent")


def _as_simplex(p):
    p = np.asarray(p, dtype=np.float64)
    if p.ndim not in (1, 2) or p.shape[-1] < 2:
        raise ValueError(f"expected probability vector(s) with C >= 2, got shape {p.shape}")
    if not np.all(np.isfinite(p)):
        raise ValueError("probabilities must be finite")
    if np.any(p < -SIMPLEX_TOL) or np.any(p > 1 + SIMPLEX_TOL):
        raise ValueError("probabilities must lie in [0, 1]")
    if np.any(np.abs(p.sum(axis=-1) - 1.0) > SIMPLEX_TOL):
        raise ValueError("probabilities must sum to 1")
    return p


def _out(x, p):
    return float(x) if p.ndim == 1 else x


def sr_score(p):
    p = _as_simplex(p)
    return _out(p.max(axis=-1), p)


def smp_score(p, gamma):
    if not gamma > 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    p = _as_simplex(p)
    return _out(p.max(axis=-1) ** gamma, p)


def neg_entropy_score(p):
    """``1 - H(p)/ln C``; the log is taken of probabilities clamped at 1e-12."""
    p = _as_simplex(p)
    C = p.shape[-1]
    H = -np.sum(p * np.log(np.maximum(p, LOG_CLAMP)), axis=-1)
    return _out(np.clip(1.0 - H / math.log(C), 0.0, 1.0), p)


def score(p, kind):
    if kind.kind == "sr":
        return sr_score(p)
    if kind.kind == "smp":
        return smp_score(p, kind.gamma)
    return neg_entropy_score(p)


def score_and_grad(P, kind):
    """Batch scores and their (sub)gradients w.r.t. the probabilities.

    For SR/SMP the subgradient of ``max`` goes entirely to the argmax
    coordinate, lowest index on ties.
    """
    P = np.asarray(P, dtype=np.float64)
    B, C = P.shape
    grad = np.zeros_like(P)
    if kind.kind == "negent":
        safe = np.maximum(P, LOG_CLAMP)
        logp = np.log(safe)
        H = -np.sum(P * logp, axis=1)
        s = np.clip(1.0 - H / math.log(C), 0.0, 1.0)
        dH = np.where(P > LOG_CLAMP, -(logp + 1.0), -logp)
        grad = -dH / math.log(C)
        return s, grad
    k = np.argmax(P, axis=1)
    m = P[np.arange(B), k]
    if kind.kind == "sr":
        s = m
        dm = np.ones(B)
    else:
        s = m**kind.gamma
        dm = kind.gamma * m ** (kind.gamma - 1.0)
    grad[np.arange(B), k] = dm
    return s, grad
