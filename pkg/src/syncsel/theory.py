"""Closed-form constants and sampled checks for the SMP score and SYNC objective.

Each ``verify_*`` function returns a :class:`TheoryReport`. ``max_violation``
is the largest observed ``measured - allowed`` value, so a report passes when
it is at most the check's tolerance.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConvergenceError
from .losses import SyncConfig, objective_output_grads, sync_term_output_grads
from .network import (
    _backprop,
    _check_input,
    _forward_cache,
    _outputs_from_cache,
    flatten_params,
    logit_input_jacobians,
    selection_grad_norms,
    unflatten_params,
    with_params,
)
from .scores import ScoreKind

POWER_TOL = 1e-10
POWER_MAX_ITER = 1000
CHUNK = 10_000


@dataclass
class TheoryReport:
    check_name: str
    n_trials: int
    max_violation: float
    bound_value: float
    passed: bool
    seed: int
    tolerance: float = 1e-9
    details: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps(
            {
                "name": self.check_name,
                "trials": self.n_trials,
                "bound": self.bound_value,
                "max_violation": self.max_violation,
                "passed": self.passed,
                "seed": self.seed,
            }
        )


@dataclass(frozen=True)
class SmoothnessInputs:
    L: float
    mu: float
    G_star: float
    B: float = 1.0
    L_z: float = 1.0

    def __post_init__(self):
        if min(self.L, self.mu, self.G_star) < 0:
            raise ValueError("L, mu and G_star must be nonnegative")
        if self.B <= 0 or self.L_z <= 0:
            raise ValueError("B and L_z must be positive")


def lipschitz_modulus(gamma, C):
    """l_inf Lipschitz modulus of ``u -> max(u)**gamma`` on the (C-1)-simplex."""
    if not gamma > 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    if C < 2:
        raise ValueError("C must be >= 2")
    if gamma >= 1:
        return float(gamma)
    return float(gamma * C ** (1.0 - gamma))


def check_gamma_admissible(gamma, B, L_z, C):
    """True iff ``L_z * (1/B) * L_gamma <= 1``.

    Evaluated directly for every gamma: for gamma < 1 the left side is not
    monotone in gamma, so admissible sets need not be intervals.
    """
    if B <= 0 or L_z <= 0:
        raise ValueError("B and L_z must be positive")
    return lipschitz_modulus(gamma, C) <= B / L_z


def smoothness_constant(inp):
    return inp.L + 2.0 * inp.mu * inp.G_star**2


def softmax_jacobian_norm(p):
    """Spectral norm of ``diag(p) - p p^T`` by block power iteration."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or p.size < 2 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("expected a probability vector")
    norms, iters = kernels.softmax_jacobian_norms(p[None, :].copy(), POWER_TOL, POWER_MAX_ITER)
    if iters[0] < 0:
        raise ConvergenceError(f"power iteration did not converge in {POWER_MAX_ITER} sweeps")
    return float(norms[0])


def sample_simplex(rng, n, C):
    """Uniform (Dirichlet(1)) draws via normalised exponentials."""
    E = rng.exponential(size=(n, C))
    return E / E.sum(axis=1, keepdims=True)


def _chunk_rng(seed, idx):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(idx)]))


def verify_lipschitz(gamma, C, n_pairs, seed, modulus_scale=1.0, tol=1e-12):
    """Sample simplex pairs and test ``|s(u)-s(v)| <= L * ||u-v||_inf``.

    Pairs are drawn in fixed-size chunks, each with its own seed, so the
    report does not depend on how chunks are scheduled. ``modulus_scale``
    exists to exercise the failure path.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    L = lipschitz_modulus(gamma, C) * modulus_scale
    worst = -np.inf
    for ci, start in enumerate(range(0, n_pairs, CHUNK)):
        n = min(CHUNK, n_pairs - start)
        rng = _chunk_rng(seed, ci)
        U = sample_simplex(rng, n, C)
        V = sample_simplex(rng, n, C)
        worst = max(worst, float(kernels.smp_pair_slack(U, V, float(gamma), L).max()))
    return TheoryReport(f"lipschitz[gamma={gamma:g},C={C}]", n_pairs, worst, L, worst <= tol, seed, tol)


def verify_softmax_jacobian(C, n_vectors, seed, logit_scale=3.0, tol=1e-9):
    """Spectral norm of the softmax Jacobian stays <= 1/2 on random logits."""
    worst = -np.inf
    stalled = 0
    for ci, start in enumerate(range(0, n_vectors, CHUNK)):
        n = min(CHUNK, n_vectors - start)
        Z = _chunk_rng(seed, ci).normal(scale=logit_scale, size=(n, C))
        E = np.exp(Z - Z.max(axis=1, keepdims=True))
        P = E / E.sum(axis=1, keepdims=True)
        norms, iters = kernels.softmax_jacobian_norms(P, POWER_TOL, POWER_MAX_ITER)
        stalled += int(np.sum(iters < 0))
        worst = max(worst, float(norms.max()) - 0.5)
    passed = worst <= tol and stalled == 0
    return TheoryReport(f"softmax_jacobian[C={C}]", n_vectors, worst, 0.5, passed, seed, tol)


def verify_gamma_bound(seed=0):
    """Reproduce the admissibility threshold for B=10, L_z=4 (gamma up to 2.5).

    For gamma >= 1 the answer must not depend on C. For gamma < 1 the modulus
    grows with C, so 0.5 is admissible with 4 classes and not with 100.
    """
    cases = [(g, C, g <= 2.5) for g in (1.0, 2.5, 2.6) for C in (2, 10, 100, 1000)]
    cases += [(0.5, 4, True), (0.5, 100, False)]
    bad = [(g, C) for g, C, want in cases if check_gamma_admissible(g, 10.0, 4.0, C) != want]
    return TheoryReport("gamma_admissible[B=10,L_z=4]", len(cases), float(len(bad)), 2.5, not bad, seed, 0.0,
                        {"mismatches": bad})


def estimate_backbone_lipschitz(model, X):
    """Max over the batch of ``||dz/dx||_2`` (prediction logits w.r.t. input).

    The per-sample Jacobian is the exact layer product; its spectral norm
    comes from power iteration on ``J^T J``.
    """
    X, _ = _check_input(model, X)
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    J = logit_input_jacobians(model, X)
    JtJ = np.einsum("boi,boj->bij", J, J)
    v = np.tile(kernels.power_start(model.input_dim), (X.shape[0], 1))
    lam = np.zeros(X.shape[0])
    for _ in range(POWER_MAX_ITER):
        w = np.einsum("bij,bj->bi", JtJ, v)
        new = np.sum(v * w, axis=1)
        nrm = np.linalg.norm(w, axis=1)
        v = np.where(nrm[:, None] > 0, w / np.where(nrm > 0, nrm, 1.0)[:, None], v)
        done = np.all(np.abs(new - lam) <= POWER_TOL * np.maximum(new, 1.0))
        lam = new
        if done:
            break
    return float(np.sqrt(max(lam.max(), 0.0)))


def _grad_vec(model, theta, X, y, cfg, part):
    m = with_params(model, unflatten_params(theta, model.params))
    cache = _forward_cache(m, X)
    out = _outputs_from_cache(m, cache)
    if part == "sync":
        _, og = sync_term_output_grads(out, cfg.score, cfg.alpha * cfg.mu)
    else:
        _, og = objective_output_grads(out, y, cfg)
    return flatten_params(_backprop(m, cache, og["z"], og["g_logit"], og["h"])), m


def _smooth_piece(model, X, cfg):
    """Which piece of the piecewise-smooth objective ``model`` sits on."""
    cache = _forward_cache(model, X)
    bits = [(pre > 0).ravel() for pre in cache["pres"]]
    bits.append((cache["g_pre1"] > 0).ravel())
    bits.append(np.argmax(cache["z"], axis=1))
    g = _outputs_from_cache(model, cache).g
    bits.append(np.atleast_1d(np.mean(g) < cfg.target_coverage))
    return np.concatenate([b.astype(np.int64) for b in bits])


def verify_smoothness(model, batch, mu, n_probe, seed, cfg=None, radius=1e-6, spread=0.05,
                      slack=0.05, max_skip_frac=0.1):
    """Probe gradient-Lipschitz behaviour of the SYNC objective around ``model``.

    Each probe draws ``theta1`` near the model's parameters and ``theta2`` at
    relative distance ``radius`` from it, then records gradient-difference
    ratios ``||grad(theta2) - grad(theta1)|| / ||theta2 - theta1||`` for
      * the SN part (``mu = 0``),
      * the sync term alone,
      * the full objective.
    ``G_hat`` is the largest per-sample selection-gradient norm seen at any
    probe point and ``L_hat`` the largest SN-part ratio. A probe violates if
    the sync ratio exceeds ``(1 + slack) * 2 mu' G_hat^2`` or the full ratio
    exceeds ``(1 + slack) * (L_hat + 2 mu' G_hat^2)``, with ``mu' = alpha*mu``
    the weight the sync term carries in the objective.

    ReLU gates, the argmax inside SR/SMP and the coverage hinge make the
    objective only piecewise smooth. Probes whose two points lie on different
    pieces are outside the bound's hypotheses; they are skipped and counted,
    and the check fails if more than ``max_skip_frac`` of probes are skipped.
    """
    if n_probe < 1:
        raise ValueError("n_probe must be >= 1")
    X, y = batch
    X, _ = _check_input(model, X)
    y = np.asarray(y)
    base = cfg or SyncConfig()
    full_cfg = SyncConfig(**{**base.__dict__, "loss_mode": "sync", "mu": float(mu)})
    sn_cfg = SyncConfig(**{**full_cfg.__dict__, "mu": 0.0})
    weight = full_cfg.alpha * full_cfg.mu
    rng = np.random.default_rng(seed)
    theta0 = flatten_params(model.params)
    scale = np.linalg.norm(theta0) / np.sqrt(theta0.size)
    rows = []
    skipped = 0
    G_hat = 0.0
    for _ in range(n_probe):
        t1 = theta0 + spread * scale * rng.normal(size=theta0.size)
        d = rng.normal(size=theta0.size)
        d *= radius * np.linalg.norm(t1) / np.linalg.norm(d)
        t2 = t1 + d
        m1 = with_params(model, unflatten_params(t1, model.params))
        m2 = with_params(model, unflatten_params(t2, model.params))
        G_hat = max(G_hat, float(selection_grad_norms(m1, X).max()), float(selection_grad_norms(m2, X).max()))
        if not np.array_equal(_smooth_piece(m1, X, full_cfg), _smooth_piece(m2, X, full_cfg)):
            skipped += 1
            continue
        step = np.linalg.norm(t2 - t1)
        ratios = []
        for c, part in ((sn_cfg, "sn"), (full_cfg, "sync"), (full_cfg, "full")):
            g1, _ = _grad_vec(model, t1, X, y, c, part)
            g2, _ = _grad_vec(model, t2, X, y, c, part)
            ratios.append(np.linalg.norm(g2 - g1) / step)
        rows.append(ratios)
    ratios = np.array(rows).reshape(-1, 3)
    sync_bound = 2.0 * weight * G_hat**2
    if len(ratios):
        L_hat = float(ratios[:, 0].max())
        full_bound = L_hat + sync_bound
        worst = float(max((ratios[:, 1] - (1.0 + slack) * sync_bound).max(),
                          (ratios[:, 2] - (1.0 + slack) * full_bound).max()))
    else:
        L_hat, full_bound, worst = float("nan"), float("nan"), float("inf")
    details = {
        "L_hat": L_hat,
        "G_hat": G_hat,
        "sync_bound": sync_bound,
        "max_sync_ratio": float(ratios[:, 1].max()) if len(ratios) else float("nan"),
        "max_full_ratio": float(ratios[:, 2].max()) if len(ratios) else float("nan"),
        "skipped_nonsmooth": skipped,
    }
    passed = worst <= 0.0 and skipped <= max_skip_frac * n_probe
    return TheoryReport(f"smoothness[mu={mu:g}]", n_probe, worst, full_bound, passed, seed, 0.0, details)


def theory_suite(seed=0, n_pairs=100_000, n_vectors=10_000, n_probe=200, modulus_scale=1.0):
    """Every check run by ``syncsel verify``."""
    from .network import init_model

    reports = []
    for gamma in (0.5, 1.0, 2.5):
        for C in (2, 5, 100):
            reports.append(verify_lipschitz(gamma, C, n_pairs, seed, modulus_scale=modulus_scale))
    for C in (2, 10, 100):
        reports.append(verify_softmax_jacobian(C, n_vectors, seed))
    reports.append(verify_gamma_bound(seed))
    model = init_model(2, [8], 3, 8, seed=seed)
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(16, 2))
    y = rng.integers(0, 3, size=16)
    cfg = SyncConfig(score=ScoreKind("smp", 1.0))
    reports.append(verify_smoothness(model, (X, y), 1.0, n_probe, seed, cfg=cfg))
    sync_only = SyncConfig(alpha=1.0, lam=0.0, score=ScoreKind("smp", 2.5))
    reports.append(verify_smoothness(model, (X, y), 1.0, n_probe, seed, cfg=sync_only))
    return reports
