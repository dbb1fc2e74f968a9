"""Mini-batch SGD with heavy-ball momentum and a cosine learning-rate schedule."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteLossError
from .losses import SyncConfig
from .network import objective_and_grads

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    batch_size: int = 1000
    lr0: float = 0.05
    momentum: float = 0.9
    weight_decay: float = 5e-4
    seed: int = 0
    sync: SyncConfig = field(default_factory=SyncConfig)

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if not self.lr0 > 0 or not 0.0 <= self.momentum < 1.0 or self.weight_decay < 0:
            raise ValueError("need lr0 > 0, momentum in [0, 1), weight_decay >= 0")


@dataclass
class EpochRecord:
    epoch: int
    mean_total_loss: float
    mean_sync_term: float
    empirical_coverage: float
    train_accuracy: float
    lr: float


def cosine_lr(step, total_steps, lr0):
    if total_steps < 1 or not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    return lr0 * (1.0 + math.cos(math.pi * step / total_steps)) / 2.0


def sgd_step(params, grads, velocity, lr, momentum, weight_decay):
    """``v <- m v + (grad + wd theta)``; ``theta <- theta - lr v``. Returns new dicts."""
    if params.keys() != grads.keys() or params.keys() != velocity.keys():
        raise ValueError("params, grads and velocity must have the same keys")
    new_p, new_v = {}, {}
    for k, theta in params.items():
        if grads[k].shape != theta.shape or velocity[k].shape != theta.shape:
            raise ValueError(f"shape mismatch for {k}")
        v = momentum * velocity[k] + (grads[k] + weight_decay * theta)
        new_v[k] = v
        new_p[k] = theta - lr * v
    return new_p, new_v


def ema(values, window=50):
    """Exponential moving average with smoothing ``2 / (window + 1)``."""
    a = 2.0 / (window + 1.0)
    out = np.empty(len(values))
    acc = values[0] if len(values) else 0.0
    for i, v in enumerate(values):
        acc = a * v + (1.0 - a) * acc
        out[i] = acc
    return out


def descent_fraction(step_losses, window=50, warmup_frac=0.1):
    """Share of post-warmup steps where the EMA of the loss does not increase."""
    e = ema(np.asarray(step_losses, dtype=np.float64), window)
    start = max(1, int(math.ceil(warmup_frac * len(e))))
    diffs = np.diff(e)[start - 1 :]
    if diffs.size == 0:
        return 1.0
    return float(np.mean(diffs <= 0.0))


def _predictions(p, mode):
    return np.argmax(p[:, :-1] if mode == "DG" else p, axis=1)


def train(model, train_set, cfg, step_trace=None):
    """Train a copy of ``model``; return ``(model, [EpochRecord, ...])``.

    Epoch ``e`` shuffles with a generator seeded by ``seed ^ e``. The learning
    rate follows :func:`cosine_lr` over all optimizer steps. If ``step_trace``
    is a list, every step's total loss is appended to it.
    """
    from .network import forward

    model = model.copy()
    if cfg.epochs == 0:
        return model, []
    if cfg.sync.model_mode != model.mode:
        raise ValueError(f"{cfg.sync.loss_mode} loss needs a {cfg.sync.model_mode}-mode model")
    X, y = train_set.X, train_set.y
    N = X.shape[0]
    if X.shape[1] != model.input_dim:
        raise ValueError("data width does not match model input")
    if cfg.batch_size > N:
        raise ValueError(f"batch_size {cfg.batch_size} exceeds dataset size {N}")
    steps_per_epoch = math.ceil(N / cfg.batch_size)
    total = cfg.epochs * steps_per_epoch
    velocity = {k: np.zeros_like(v) for k, v in model.params.items()}
    records = []
    step = 0
    for epoch in range(cfg.epochs):
        order = np.random.default_rng(cfg.seed ^ epoch).permutation(N)
        tot = syn = cov = 0.0
        correct = 0
        for b in range(steps_per_epoch):
            idx = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            lr = cosine_lr(step, total, cfg.lr0)
            try:
                bd, grads = objective_and_grads(model, X[idx], y[idx], cfg.sync)
            except NonFiniteLossError as exc:
                raise NonFiniteLossError(f"non-finite loss at step {step}: {exc}", step=step) from None
            out = forward(model, X[idx])
            correct += int(np.sum(_predictions(out.p, model.mode) == y[idx]))
            n = len(idx)
            tot += bd.total * n
            syn += bd.sync_term * n
            cov += bd.empirical_coverage * n
            if step_trace is not None:
                step_trace.append(bd.total)
            model.params, velocity = sgd_step(model.params, grads, velocity, lr, cfg.momentum, cfg.weight_decay)
            step += 1
        rec = EpochRecord(epoch, tot / N, syn / N, cov / N, correct / N, lr)
        records.append(rec)
        log.debug("epoch %d loss %.6f cov %.4f acc %.4f", epoch, rec.mean_total_loss, rec.empirical_coverage, rec.train_accuracy)
    return model, records


def write_metrics(records, path):
    """One row per epoch: ``epoch,total,sync,coverage,acc,lr``."""
    with open(path, "w") as fh:
        fh.write("epoch,total,sync,coverage,acc,lr\n")
        for r in records:
            fh.write(f"{r.epoch},{r.mean_total_loss!r},{r.mean_sync_term!r},{r.empirical_coverage!r},{r.train_accuracy!r},{r.lr!r}\n")


def write_trace(step_losses, path):
    with open(path, "w") as fh:
        fh.write("step,loss\n")
        for i, v in enumerate(step_losses):
            fh.write(f"{i},{float(v)!r}\n")
