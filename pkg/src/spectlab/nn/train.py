"""Adam training of the reconstructor on the mean ``1 - SSIM`` objective."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..ssim import SsimParams, ssim_batch
from .model import Model, NumericalError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 30
    val_fraction: float = 0.1
    seed: int = 0


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float


@dataclass
class TrainResult:
    model: Model
    history: list[EpochRecord]
    initial_val_loss: float
    best_epoch: int


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [[np.zeros_like(t) for t in pair] for pair in params]
        self.v = [[np.zeros_like(t) for t in pair] for pair in params]
        self.t = 0

    def step(self, params, grads) -> None:
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for pair, gpair, mpair, vpair in zip(params, grads, self.m, self.v):
            for i in range(2):
                g = gpair[i].astype(pair[i].dtype, copy=False)
                m, v = mpair[i], vpair[i]
                m *= self.beta1
                m += (1 - self.beta1) * g
                v *= self.beta2
                v += (1 - self.beta2) * g * g
                pair[i] -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(pair[i].dtype)


def split_indices(n_items: int, val_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic disjoint train/validation split."""
    if n_items < 1:
        raise ValueError("empty dataset")
    n_val = int(round(n_items * val_fraction))
    perm = np.random.Generator(np.random.PCG64([seed, 1])).permutation(n_items)
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def batch_loss(model: Model, x: np.ndarray, y: np.ndarray, params: SsimParams = SsimParams()):
    """Mean ``1 - SSIM`` over the batch and its gradient for every parameter."""
    out, cache = model.forward(x, keep=True)
    s, grad = ssim_batch(out, y, params)
    loss = float(np.mean(1 - s))
    grads = model.backward(cache, (grad / x.shape[0]).astype(out.dtype, copy=False))
    return loss, grads


def evaluate_loss(model: Model, x: np.ndarray, y: np.ndarray, batch_size: int = 256) -> float:
    if len(x) == 0:
        return float("nan")
    total = 0.0
    for start in range(0, len(x), batch_size):
        out = model.forward(x[start:start + batch_size])
        s, _ = ssim_batch(out, y[start:start + batch_size])
        total += float(np.sum(1 - s))
    return total / len(x)


def train(model: Model, inputs: np.ndarray, targets: np.ndarray, config: TrainConfig = TrainConfig()) -> TrainResult:
    """Train in place on ``(inputs, targets)``; returns the best-validation weights.

    ``inputs`` is ``(N, *model input shape)`` and ``targets`` ``(N, *model output shape)``.
    """
    if len(inputs) == 0:
        raise ValueError("empty dataset")
    if len(inputs) != len(targets):
        raise ValueError("inputs and targets differ in length")
    dtype = model.params[0][0].dtype
    inputs = np.asarray(inputs, dtype=dtype)
    targets = np.asarray(targets, dtype=dtype)
    train_idx, val_idx = split_indices(len(inputs), config.val_fraction, config.seed)
    if len(val_idx) == 0:
        val_idx = train_idx
    xv, yv = inputs[val_idx], targets[val_idx]

    opt = Adam(model.params, config.lr, config.beta1, config.beta2, config.eps)
    rng = np.random.Generator(np.random.PCG64([config.seed, 2]))
    initial = evaluate_loss(model, xv, yv)
    best_loss, best_epoch, best = np.inf, -1, model.copy()
    history = []
    for epoch in range(config.epochs):
        order = train_idx[rng.permutation(len(train_idx))]
        total, count = 0.0, 0
        for b, start in enumerate(range(0, len(order), config.batch_size)):
            idx = order[start:start + config.batch_size]
            try:
                loss, grads = batch_loss(model, inputs[idx], targets[idx])
            except NumericalError as exc:
                raise NumericalError(f"epoch {epoch} batch {b}: {exc}", exc.layer) from exc
            if not np.isfinite(loss):
                raise NumericalError(f"epoch {epoch} batch {b}: loss diverged")
            opt.step(model.params, grads)
            total += loss * len(idx)
            count += len(idx)
        val = evaluate_loss(model, xv, yv)
        history.append(EpochRecord(epoch, total / count, val))
        log.info("epoch %d train %.5f val %.5f", epoch, total / count, val)
        if val < best_loss:
            best_loss, best_epoch, best = val, epoch, model.copy()
    model.params = best.params
    return TrainResult(model, history, initial, best_epoch)
