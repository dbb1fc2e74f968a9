"""Three-head MLP classifier with exact reverse-mode gradients.

Layout: a shared ReLU body followed by
  * ``f`` -- linear prediction head producing C logits (C+1 in DG mode),
  * ``g`` -- selection head, linear -> ReLU -> linear -> sigmoid,
  * ``h`` -- linear auxiliary head producing C logits.

DG-mode models carry only the body and ``f``; the extra output is the
abstention class.

Parameters live in an ordered ``dict`` keyed ``body0.W``, ``body0.b``, ...,
``f.W``, ``f.b``, ``g1.W``, ``g1.b``, ``g2.W``, ``g2.b``, ``h.W``, ``h.b``.
That order is the declaration order used by checkpoints and by
:func:`flatten_params`. Weight matrices are stored ``(out, in)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, NonFiniteLossError

MODES = ("SN", "DG")
CHECKPOINT_MAGIC = b"SYNCNET1"


@dataclass
class SelectiveModel:
    input_dim: int
    hidden_dims: tuple
    num_classes: int
    g_hidden: int
    mode: str = "SN"
    params: dict = field(default_factory=dict)

    @property
    def f_width(self):
        return self.num_classes + 1 if self.mode == "DG" else self.num_classes

    def copy(self):
        return SelectiveModel(
            self.input_dim,
            tuple(self.hidden_dims),
            self.num_classes,
            self.g_hidden,
            self.mode,
            {k: v.copy() for k, v in self.params.items()},
        )

    def n_params(self):
        return sum(v.size for v in self.params.values())


@dataclass
class HeadOutputs:
    """Batched head outputs; leading axis is the sample axis."""

    z: np.ndarray
    p: np.ndarray
    g: np.ndarray | None = None
    h_logits: np.ndarray | None = None
    dg_abstain: np.ndarray | None = None


def _layer_shapes(input_dim, hidden_dims, C, g_hidden, mode):
    shapes = []
    fan_in = input_dim
    for i, width in enumerate(hidden_dims):
        shapes.append((f"body{i}", (width, fan_in)))
        fan_in = width
    f_out = C + 1 if mode == "DG" else C
    shapes.append(("f", (f_out, fan_in)))
    if mode == "SN":
        shapes.append(("g1", (g_hidden, fan_in)))
        shapes.append(("g2", (1, g_hidden)))
        shapes.append(("h", (C, fan_in)))
    return shapes


def init_model(input_dim, hidden_dims, C, g_hidden, seed, mode="SN"):
    """Build a model with He-uniform weights and zero biases.

    Weights are drawn from ``U(-sqrt(6/fan_in), sqrt(6/fan_in))`` using a
    generator seeded by ``seed`` in declaration order.
    """
    hidden_dims = tuple(int(h) for h in hidden_dims)
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if input_dim < 1 or g_hidden < 1 or any(h < 1 for h in hidden_dims):
        raise ValueError("all layer dimensions must be >= 1")
    if C < 2:
        raise ValueError("need at least two classes")
    rng = np.random.default_rng(seed)
    params = {}
    for name, (out_dim, in_dim) in _layer_shapes(input_dim, hidden_dims, C, g_hidden, mode):
        bound = np.sqrt(6.0 / in_dim)
        params[f"{name}.W"] = rng.uniform(-bound, bound, size=(out_dim, in_dim))
        params[f"{name}.b"] = np.zeros(out_dim)
    return SelectiveModel(int(input_dim), hidden_dims, int(C), int(g_hidden), mode, params)


def softmax(z):
    """Row-wise softmax with max-subtraction; works on 1-D or 2-D input."""
    z = np.asarray(z, dtype=np.float64)
    if not np.all(np.isfinite(z)):
        raise ValueError("softmax input must be finite")
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def sigmoid(a):
    # split by sign so neither branch overflows
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


def _check_input(model, X):
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise ValueError(f"expected input of width {model.input_dim}, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValueError("input contains non-finite values")
    return X, single


def _forward_cache(model, X):
    P = model.params
    cache = {"acts": [X], "pres": []}
    a = X
    for i in range(len(model.hidden_dims)):
        pre = a @ P[f"body{i}.W"].T + P[f"body{i}.b"]
        a = np.maximum(pre, 0.0)
        cache["pres"].append(pre)
        cache["acts"].append(a)
    phi = a
    z = phi @ P["f.W"].T + P["f.b"]
    cache["z"] = z
    if model.mode == "SN":
        g_pre1 = phi @ P["g1.W"].T + P["g1.b"]
        u = np.maximum(g_pre1, 0.0)
        g_logit = (u @ P["g2.W"].T)[:, 0] + P["g2.b"][0]
        cache["g_pre1"] = g_pre1
        cache["g_u"] = u
        cache["g_logit"] = g_logit
        cache["h"] = phi @ P["h.W"].T + P["h.b"]
    return cache


def _outputs_from_cache(model, cache):
    z = cache["z"]
    p = softmax(z)
    if model.mode == "DG":
        return HeadOutputs(z=z, p=p, dg_abstain=p[:, -1].copy())
    return HeadOutputs(z=z, p=p, g=sigmoid(cache["g_logit"]), h_logits=cache["h"])


def forward(model, x, mode=None):
    """Evaluate all heads on one sample (1-D ``x``) or a batch (2-D)."""
    if mode is not None and mode != model.mode:
        raise ValueError(f"model is in {model.mode} mode, requested {mode}")
    X, single = _check_input(model, x)
    out = _outputs_from_cache(model, _forward_cache(model, X))
    if single:
        out = HeadOutputs(
            z=out.z[0],
            p=out.p[0],
            g=None if out.g is None else float(out.g[0]),
            h_logits=None if out.h_logits is None else out.h_logits[0],
            dg_abstain=None if out.dg_abstain is None else float(out.dg_abstain[0]),
        )
    return out


def _backprop(model, cache, dz, dg_logit=None, dh=None):
    """Push output-space gradients back to every parameter."""
    P = model.params
    grads = {}
    phi = cache["acts"][-1]
    grads["f.W"] = dz.T @ phi
    grads["f.b"] = dz.sum(axis=0)
    dphi = dz @ P["f.W"]
    if model.mode == "SN":
        u = cache["g_u"]
        grads["g2.W"] = dg_logit[None, :] @ u
        grads["g2.b"] = np.array([dg_logit.sum()])
        dpre1 = (dg_logit[:, None] * P["g2.W"]) * (cache["g_pre1"] > 0)
        grads["g1.W"] = dpre1.T @ phi
        grads["g1.b"] = dpre1.sum(axis=0)
        grads["h.W"] = dh.T @ phi
        grads["h.b"] = dh.sum(axis=0)
        dphi = dphi + dpre1 @ P["g1.W"] + dh @ P["h.W"]
    da = dphi
    for i in reversed(range(len(model.hidden_dims))):
        dpre = da * (cache["pres"][i] > 0)
        grads[f"body{i}.W"] = dpre.T @ cache["acts"][i]
        grads[f"body{i}.b"] = dpre.sum(axis=0)
        if i > 0:
            da = dpre @ P[f"body{i}.W"]
    return {k: grads[k] for k in P}


def objective_and_grads(model, X, y, cfg):
    """Batch objective breakdown and exact gradients for ``cfg.loss_mode``."""
    from . import losses

    X, _ = _check_input(model, X)
    y = np.asarray(y)
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    if y.shape != (X.shape[0],):
        raise ValueError("labels must be a vector matching the batch")
    cache = _forward_cache(model, X)
    out = _outputs_from_cache(model, cache)
    breakdown, og = losses.objective_output_grads(out, y, cfg)
    if not np.isfinite(breakdown.total):
        raise NonFiniteLossError(f"non-finite objective {breakdown.total!r}")
    grads = _backprop(model, cache, og["z"], og.get("g_logit"), og.get("h"))
    return breakdown, grads


def backward(model, batch, loss):
    """Return ``(loss_value, gradients)`` for ``batch = (X, y)`` under ``loss``."""
    X, y = batch
    breakdown, grads = objective_and_grads(model, X, y, loss)
    return breakdown.total, grads


def selection_grad_norms(model, X):
    """Per-sample ``||d g(x_i) / d theta||_2`` for the selection output.

    Uses the outer-product structure of dense-layer gradients, so no
    per-sample backward pass is needed.
    """
    if model.mode != "SN":
        raise ValueError("selection head exists only in SN mode")
    X, _ = _check_input(model, X)
    P = model.params
    c = _forward_cache(model, X)
    g = sigmoid(c["g_logit"])
    d_logit = g * (1.0 - g)
    u = c["g_u"]
    phi = c["acts"][-1]
    sq = d_logit**2 * (np.sum(u * u, axis=1) + 1.0)
    dpre1 = (d_logit[:, None] * P["g2.W"]) * (c["g_pre1"] > 0)
    sq += np.sum(dpre1**2, axis=1) * (np.sum(phi * phi, axis=1) + 1.0)
    da = dpre1 @ P["g1.W"]
    for i in reversed(range(len(model.hidden_dims))):
        dpre = da * (c["pres"][i] > 0)
        a_in = c["acts"][i]
        sq += np.sum(dpre**2, axis=1) * (np.sum(a_in * a_in, axis=1) + 1.0)
        if i > 0:
            da = dpre @ P[f"body{i}.W"]
    return np.sqrt(sq)


def logit_input_jacobians(model, X):
    """Stack of exact ``d z / d x`` matrices, shape ``(B, f_width, input_dim)``."""
    X, _ = _check_input(model, X)
    P = model.params
    c = _forward_cache(model, X)
    B = X.shape[0]
    J = np.broadcast_to(np.eye(model.input_dim), (B, model.input_dim, model.input_dim))
    for i in range(len(model.hidden_dims)):
        mask = (c["pres"][i] > 0).astype(np.float64)
        J = mask[:, :, None] * np.einsum("oi,bij->boj", P[f"body{i}.W"], J)
    return np.einsum("oi,bij->boj", P["f.W"], J)


def flatten_params(params):
    return np.concatenate([v.ravel() for v in params.values()])


def unflatten_params(vec, like):
    out = {}
    pos = 0
    for k, v in like.items():
        out[k] = vec[pos : pos + v.size].reshape(v.shape).copy()
        pos += v.size
    if pos != vec.size:
        raise ValueError("parameter vector length does not match model")
    return out


def with_params(model, params):
    m = model.copy()
    m.params = {k: np.array(params[k], dtype=np.float64) for k in model.params}
    return m


def save_checkpoint(model, path):
    """Write the flat little-endian checkpoint (magic, u32 header, f64 tensors)."""
    header = [model.input_dim, len(model.hidden_dims), *model.hidden_dims,
              model.num_classes, model.g_hidden, MODES.index(model.mode)]
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack(f"<{len(header)}I", *header))
        for v in model.params.values():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def load_checkpoint(path):
    data = Path(path).read_bytes()
    if data[:8] != CHECKPOINT_MAGIC:
        raise DataError(f"{path}: not a SYNCNET1 checkpoint")
    pos = 8

    def u32():
        nonlocal pos
        if pos + 4 > len(data):
            raise DataError(f"{path}: truncated header")
        (val,) = struct.unpack_from("<I", data, pos)
        pos += 4
        return val

    input_dim = u32()
    hidden = tuple(u32() for _ in range(u32()))
    C, g_hidden, mode_idx = u32(), u32(), u32()
    if mode_idx >= len(MODES):
        raise DataError(f"{path}: unknown mode id {mode_idx}")
    mode = MODES[mode_idx]
    params = {}
    for name, shape in _layer_shapes(input_dim, hidden, C, g_hidden, mode):
        for key, shp in ((f"{name}.W", shape), (f"{name}.b", (shape[0],))):
            n = int(np.prod(shp))
            if pos + 8 * n > len(data):
                raise DataError(f"{path}: truncated parameter block {key}")
            params[key] = np.frombuffer(data, dtype="<f8", count=n, offset=pos).reshape(shp).astype(np.float64)
            pos += 8 * n
    if pos != len(data):
        raise DataError(f"{path}: {len(data) - pos} trailing bytes")
    return SelectiveModel(input_dim, hidden, C, g_hidden, mode, params)
