"""Adam with decoupled weight decay and the early-stopping training loop."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import Forecaster


class Adam:
    """Standard Adam (b1=0.9, b2=0.999, eps=1e-8) with decoupled decay."""

    def __init__(
        self,
        lr: float = 1e-3,
        weight_decay: float = 1e-4,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.lr = lr
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: dict[str, np.ndarray] = {}
        self._v: dict[str, np.ndarray] = {}

    def step(self, named_params) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for name, p in named_params:
            m = self._m.setdefault(name, np.zeros_like(p.value))
            v = self._v.setdefault(name, np.zeros_like(p.value))
            m += (1.0 - self.beta1) * (p.grad - m)
            v += (1.0 - self.beta2) * (p.grad * p.grad - v)
            update = (m / b1c) / (np.sqrt(v / b2c) + self.eps)
            p.value -= self.lr * update
            if self.weight_decay:
                p.value -= self.lr * self.weight_decay * p.value


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    lr: float


@dataclass
class TrainResult:
    history: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = math.inf


def _batches(n: int, batch_size: int):
    for lo in range(0, n, batch_size):
        yield slice(lo, min(lo + batch_size, n))


def validation_loss(model: Forecaster, x: np.ndarray, y: np.ndarray, chunk: int = 256) -> float:
    """Data-term MAE on held-out windows (no penalty), batched for memory."""
    total = 0.0
    for sl in _batches(len(x), chunk):
        pred = model.forward(x[sl], train=False)
        total += float(
            np.sum(np.abs(pred[..., 0] - y[sl][..., 0]))
            + np.sum(np.abs(pred[..., 1] - y[sl][..., 1]))
        )
    return total / (len(x) * y.shape[1])


def train(
    model: Forecaster,
    train_xyw: tuple[np.ndarray, np.ndarray, np.ndarray],
    val_xy: tuple[np.ndarray, np.ndarray],
    max_epochs: int = 200,
    patience: int = 10,
    batch_size: int = 32,
) -> TrainResult:
    """Weighted-resampling mini-batch epochs with early stopping.

    Samples are drawn per epoch with probability proportional to their
    stratum weight, so rare movement patterns keep showing up. Training
    stops once ``patience`` consecutive epochs fail to improve validation
    loss, restoring the best snapshot.
    """
    x, y, w = train_xyw
    if len(x) == 0 or len(val_xy[0]) == 0:
        raise ValueError("empty training or validation set")
    sampler = np.random.default_rng(np.random.SeedSequence(model.config.seed).spawn(3)[2])
    prob = w / w.sum()
    optimizer = Adam(lr=model.config.learning_rate, weight_decay=model.config.weight_decay)
    result = TrainResult()
    best_state = model.snapshot()
    bad_streak = 0
    for epoch in range(1, max_epochs + 1):
        order = sampler.choice(len(x), size=len(x), replace=True, p=prob)
        losses = []
        for sl in _batches(len(order), batch_size):
            idx = order[sl]
            loss = model.train_step_gradients(x[idx], y[idx], train=True)
            if not math.isfinite(loss):
                raise RuntimeError(f"training diverged at epoch {epoch}")
            optimizer.step(model.named_params())
            losses.append(loss)
        val = validation_loss(model, *val_xy)
        if not math.isfinite(val):
            raise RuntimeError(f"validation diverged at epoch {epoch}")
        result.history.append(
            EpochRecord(epoch, float(np.mean(losses)), val, model.config.learning_rate)
        )
        if val < result.best_val_loss:
            result.best_val_loss = val
            result.best_epoch = epoch
            best_state = model.snapshot()
            bad_streak = 0
        else:
            bad_streak += 1
        if bad_streak >= patience:
            break
    model.set_state(best_state)
    return result


def history_csv(result: TrainResult) -> str:
    lines = ["epoch,train_loss,val_loss,lr"]
    for rec in result.history:
        lines.append(f"{rec.epoch},{rec.train_loss:.10f},{rec.val_loss:.10f},{rec.lr}")
    return "\n".join(lines) + "\n"
