"""Pure-numpy versions of the compiled kernels.

Used when the extension is not built or ``SYNCSEL_PURE_PYTHON=1``. The two
backends run the same arithmetic in the same order per row, so results agree
to the last few ulps.
"""

import numpy as np

_GOLDEN = 0.6180339887498949


_SILVER = 0.41421356237309503


def power_start(C):
    """Deterministic unit start vector; never parallel to the all-ones vector."""
    v = (np.arange(1, C + 1) * _GOLDEN) % 1.0 - 0.5
    return v / np.sqrt(np.sum(v * v))


def _dot(a, b):
    return np.sum(a * b, axis=1)


def _orth(q1, src):
    dst = src - _dot(q1, src)[:, None] * q1
    return dst, np.sqrt(_dot(dst, dst))


def smp_pair_slack(U, V, gamma, modulus):
    """Per-pair ``|max(u)^g - max(v)^g| - modulus * ||u - v||_inf``."""
    U = np.asarray(U, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    lhs = np.abs(U.max(axis=1) ** gamma - V.max(axis=1) ** gamma)
    return lhs - modulus * np.abs(U - V).max(axis=1)


def softmax_jacobian_norms(P, tol, max_iter):
    """Spectral norm of ``diag(p) - p p^T`` for every row of ``P``.

    Two-vector block power iteration with a 2x2 Rayleigh-Ritz step, so a
    near-tie between the two largest eigenvalues does not stall convergence.
    The Jacobian is applied matrix-free. Rows that have not converged after
    ``max_iter`` sweeps get iteration count -1.
    """
    P = np.asarray(P, dtype=np.float64)
    n, C = P.shape
    j = np.arange(1, C + 1)
    v1 = np.tile(power_start(C), (n, 1))
    s2 = (j * _SILVER) % 1.0 - 0.5
    v2, nrm = _orth(v1, np.tile(s2, (n, 1)))
    v2 = v2 / nrm[:, None]
    lam = np.zeros(n)
    lam_prev = np.full(n, -1.0)
    iters = np.full(n, -1, dtype=np.int64)
    active = np.arange(n)
    for it in range(1, max_iter + 1):
        if active.size == 0:
            break
        p, a1, a2 = P[active], v1[active], v2[active]
        w1 = p * a1 - p * _dot(p, a1)[:, None]
        w2 = p * a2 - p * _dot(p, a2)[:, None]
        a, b, d = _dot(a1, w1), _dot(a1, w2), _dot(a2, w2)
        la = 0.5 * (a + d) + np.sqrt(0.25 * (a - d) * (a - d) + b * b)
        n1 = np.sqrt(_dot(w1, w1))
        swap = n1 == 0.0
        if swap.any():
            w1 = np.where(swap[:, None], w2, w1)
            n1 = np.where(swap, np.sqrt(_dot(w2, w2)), n1)
        dead = n1 == 0.0
        la[dead] = 0.0
        q1 = w1 / np.where(dead, 1.0, n1)[:, None]
        r, n2 = _orth(q1, w2)
        bad = n2 <= 1e-12 * n1
        if bad.any():
            r2, m2 = _orth(q1, a2)
            r = np.where(bad[:, None], r2, r)
            n2 = np.where(bad, m2, n2)
            bad2 = bad & (m2 <= 1e-12)
            if bad2.any():
                r3, m3 = _orth(q1, a1)
                r = np.where(bad2[:, None], r3, r)
                n2 = np.where(bad2, m3, n2)
        keep = ~dead
        v1[active[keep]] = q1[keep]
        v2[active[keep]] = r[keep] / n2[keep, None]
        done = dead | (np.abs(la - lam_prev[active]) <= tol)
        lam[active] = la
        lam_prev[active] = la
        iters[active[done]] = it
        active = active[~done]
    return lam, iters
