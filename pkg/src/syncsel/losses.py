"""Training objectives: SelectiveNet, Deep Gamblers, and SYNC.

Batch objective for ``loss_mode="sync"``::

    total = alpha * (risk + lam * penalty + mu * sync) + (1 - alpha) * aux

where ``risk`` is the coverage-normalised selective risk, ``penalty`` the
coverage penalty on ``mean(g)``, ``sync`` the mean squared gap between the
selection head and ``score(p)``, and ``aux`` the auxiliary-head
cross-entropy. ``loss_mode="sn"`` is the same expression without the sync
term. ``loss_mode="dg"`` is the gambler's log-wealth loss on a (C+1)-way
softmax.

:func:`objective_output_grads` returns exact gradients with respect to the
prediction logits, the selection-head pre-sigmoid and the auxiliary logits.
The sync gradient flows into both ``g`` and ``p``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .scores import LOG_CLAMP, ScoreKind, score_and_grad

EPS_DIV = 1e-8
LOSS_MODES = ("sn", "dg", "sync")
PENALTY_MODES = ("hinge", "symmetric")


@dataclass(frozen=True)
class SyncConfig:
    loss_mode: str = "sync"
    target_coverage: float = 0.7
    lam: float = 6.0
    alpha: float = 0.5
    mu: float = 1.0
    score: ScoreKind = field(default_factory=lambda: ScoreKind("smp", 0.5))
    penalty: str = "hinge"
    odds: float = 2.0

    def __post_init__(self):
        if self.loss_mode not in LOSS_MODES:
            raise ConfigError(f"loss must be one of {LOSS_MODES}, got {self.loss_mode!r}")
        if self.penalty not in PENALTY_MODES:
            raise ConfigError(f"penalty must be one of {PENALTY_MODES}, got {self.penalty!r}")
        if not 0.0 < self.target_coverage <= 1.0:
            raise ConfigError("coverage must be in (0, 1]")
        if self.lam < 0 or self.mu < 0:
            raise ConfigError("lambda and mu must be >= 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ConfigError("alpha must be in [0, 1]")
        if self.loss_mode == "dg" and not self.odds > 1.0:
            raise ConfigError("DG odds must be > 1")

    @property
    def model_mode(self):
        return "DG" if self.loss_mode == "dg" else "SN"


@dataclass
class BatchLossBreakdown:
    total: float
    selective_risk: float = 0.0
    coverage_penalty: float = 0.0
    sync_term: float = 0.0
    aux_loss: float = 0.0
    empirical_coverage: float = 0.0


def _check_labels(y, C):
    y = np.asarray(y)
    if not np.issubdtype(y.dtype, np.integer):
        raise ValueError("labels must be integers")
    if y.size and (y.min() < 0 or y.max() >= C):
        raise ValueError(f"labels must lie in [0, {C})")
    return y


def cross_entropy_per_sample(P, y):
    """``-log(max(p_y, 1e-12))`` for each row."""
    P = np.asarray(P, dtype=np.float64)
    y = _check_labels(y, P.shape[1])
    return -np.log(np.maximum(P[np.arange(P.shape[0]), y], LOG_CLAMP))


def _ce_grad_logits(P, y):
    # d CE / d logits = p - onehot(y); zero where the clamp is active
    G = P.copy()
    rows = np.arange(P.shape[0])
    G[rows, y] -= 1.0
    G[P[rows, y] <= LOG_CLAMP] = 0.0
    return G


def _softmax_vjp(P, v):
    return P * (v - np.sum(P * v, axis=1, keepdims=True))


def empirical_selective_risk(per_sample_loss, g):
    loss = np.asarray(per_sample_loss, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if loss.shape != g.shape:
        raise ValueError("loss and g must have the same length")
    if loss.size == 0:
        raise ValueError("empty batch")
    return float(np.sum(loss * g) / (np.sum(g) + EPS_DIV))


def coverage_penalty(target, coverage, mode="hinge"):
    gap = target - coverage
    if mode == "hinge":
        return max(0.0, gap) ** 2
    if mode == "symmetric":
        return gap**2
    raise ConfigError(f"unknown penalty mode {mode!r}")


def _coverage_penalty_grad(target, coverage, mode):
    gap = target - coverage
    if mode == "hinge":
        return -2.0 * max(0.0, gap)
    return -2.0 * gap


def aux_loss(h_logits, y):
    from .network import softmax

    return float(np.mean(cross_entropy_per_sample(softmax(h_logits), y)))


def sync_term(g, P, kind):
    s, _ = score_and_grad(np.atleast_2d(P), kind)
    g = np.atleast_1d(np.asarray(g, dtype=np.float64))
    return float(np.mean((g - s) ** 2))


def dg_loss(p_ext, y, odds):
    """Gambler's loss ``-log(p_y * odds + p_abstain)`` for one sample."""
    p_ext = np.asarray(p_ext, dtype=np.float64)
    if not odds > 1.0:
        raise ValueError("odds must be > 1")
    if not 0 <= y < p_ext.shape[-1] - 1:
        raise ValueError(f"label {y} out of range for {p_ext.shape[-1] - 1} classes")
    return float(-np.log(max(p_ext[y] * odds + p_ext[-1], LOG_CLAMP)))


def dg_batch_loss(P_ext, y, odds):
    P_ext = np.asarray(P_ext, dtype=np.float64)
    y = _check_labels(y, P_ext.shape[1] - 1)
    w = P_ext[np.arange(len(y)), y] * odds + P_ext[:, -1]
    return float(np.mean(-np.log(np.maximum(w, LOG_CLAMP))))


def _selective(out, y, cfg, with_sync, need_grads):
    P, g = out.p, out.g
    B, C = P.shape
    y = _check_labels(y, C)
    if B == 0:
        raise ValueError("empty batch")
    ce = cross_entropy_per_sample(P, y)
    denom = np.sum(g) + EPS_DIV
    risk = float(np.sum(ce * g) / denom)
    chat = float(np.mean(g))
    pen = coverage_penalty(cfg.target_coverage, chat, cfg.penalty)
    aux = aux_loss(out.h_logits, y)
    s, ds_dp = score_and_grad(P, cfg.score)
    sync = float(np.mean((g - s) ** 2))
    use_sync = with_sync and cfg.mu != 0
    inner = risk + cfg.lam * pen
    if use_sync:
        inner = inner + cfg.mu * sync
    total = cfg.alpha * inner + (1.0 - cfg.alpha) * aux
    bd = BatchLossBreakdown(
        total=float(total),
        selective_risk=risk,
        coverage_penalty=pen,
        sync_term=sync if with_sync else 0.0,
        aux_loss=aux,
        empirical_coverage=chat,
    )
    if not need_grads:
        return bd, None
    a = cfg.alpha
    dz = (a * g / denom)[:, None] * _ce_grad_logits(P, y)
    dg = a * ((ce - risk) / denom + cfg.lam * _coverage_penalty_grad(cfg.target_coverage, chat, cfg.penalty) / B)
    if use_sync:
        resid = g - s
        dg = dg + a * cfg.mu * 2.0 * resid / B
        dz = dz + _softmax_vjp(P, (-a * cfg.mu * 2.0 * resid / B)[:, None] * ds_dp)
    from .network import softmax

    Q = softmax(out.h_logits)
    dh = ((1.0 - a) / B) * _ce_grad_logits(Q, y)
    return bd, {"z": dz, "g_logit": dg * g * (1.0 - g), "h": dh}


def sn_selective_loss(outputs, y, cfg):
    return _selective(outputs, y, cfg, with_sync=False, need_grads=False)[0]


def sync_loss(outputs, y, cfg):
    return _selective(outputs, y, cfg, with_sync=True, need_grads=False)[0]


def _dg(out, y, cfg):
    P = out.p
    B = P.shape[0]
    y = _check_labels(y, P.shape[1] - 1)
    rows = np.arange(B)
    w = P[rows, y] * cfg.odds + P[:, -1]
    live = w > LOG_CLAMP
    total = float(np.mean(-np.log(np.maximum(w, LOG_CLAMP))))
    v = np.zeros_like(P)
    inv = np.where(live, 1.0 / np.where(live, w, 1.0), 0.0) / B
    v[rows, y] = -cfg.odds * inv
    v[:, -1] += -inv
    bd = BatchLossBreakdown(total=total, empirical_coverage=float(np.mean(1.0 - P[:, -1])))
    return bd, {"z": _softmax_vjp(P, v)}


def objective_output_grads(outputs, y, cfg):
    """Objective breakdown plus gradients w.r.t. the raw head outputs."""
    if cfg.loss_mode == "dg":
        if outputs.dg_abstain is None:
            raise ConfigError("DG loss needs a DG-mode model")
        return _dg(outputs, y, cfg)
    if outputs.g is None:
        raise ConfigError(f"{cfg.loss_mode} loss needs an SN-mode model")
    return _selective(outputs, y, cfg, with_sync=cfg.loss_mode == "sync", need_grads=True)


def objective(outputs, y, cfg):
    if cfg.loss_mode == "dg":
        return _dg(outputs, y, cfg)[0]
    return _selective(outputs, y, cfg, with_sync=cfg.loss_mode == "sync", need_grads=False)[0]


def sync_term_output_grads(outputs, kind, weight=1.0):
    """``weight * mean((g - score(p))^2)`` alone, with output gradients."""
    P, g = outputs.p, outputs.g
    B = P.shape[0]
    s, ds_dp = score_and_grad(P, kind)
    resid = g - s
    value = weight * float(np.mean(resid**2))
    dg = weight * 2.0 * resid / B
    dz = _softmax_vjp(P, (-dg)[:, None] * ds_dp)
    return value, {"z": dz, "g_logit": dg * g * (1.0 - g), "h": np.zeros_like(outputs.h_logits)}
