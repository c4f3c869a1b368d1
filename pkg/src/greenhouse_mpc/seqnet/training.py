"""Loss, optimizer, schedule and the mini-batch training loop."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .network import NetworkWeights, backward, forward, init_weights, predict

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    window: int = 24
    batch_size: int = 8
    epochs: int = 15
    learning_rate: float = 3e-5
    step_size: int = 5
    gamma: float = 0.5
    dropout: float = 0.2
    hidden: int = 16
    head_hidden: int = 16
    seed: int = 0

    def __post_init__(self):
        for name in ("window", "batch_size", "epochs", "learning_rate", "step_size", "gamma", "hidden", "head_hidden"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")


def mse_loss(pred, target) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {pred.shape} != target shape {target.shape}")
    return float(np.mean((pred - target) ** 2))


def steplr(lr0: float, epoch: int, step_size: int = 5, gamma: float = 0.5) -> float:
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return lr0 * gamma ** (epoch // step_size)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, theta: np.ndarray, **kw) -> "AdamState":
        return cls(np.zeros_like(theta), np.zeros_like(theta), **kw)


def adam_step(theta: np.ndarray, grad: np.ndarray, state: AdamState, lr: float) -> np.ndarray:
    """Bias-corrected Adam update; mutates ``state`` and returns the new parameters."""
    state.t += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad * grad
    m_hat = state.m / (1.0 - state.beta1 ** state.t)
    v_hat = state.v / (1.0 - state.beta2 ** state.t)
    return theta - lr * m_hat / (np.sqrt(v_hat) + state.eps)


def batch_loss_and_grad(X, Y, w: NetworkWeights, dropout: float = 0.0, rng=None, mask=None):
    """Mean squared error over a batch and its exact gradient."""
    pred, cache = forward(X, w, train=True, dropout=dropout, rng=rng, mask=mask)
    diff = pred - Y
    loss = float(np.mean(diff ** 2))
    grad = backward(2.0 * diff / diff.size, cache, w)
    return loss, grad


@dataclass
class TrainResult:
    weights: NetworkWeights
    loss_history: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)


def train(kind: str, X: np.ndarray, Y: np.ndarray, config: TrainConfig = TrainConfig(),
          weights: NetworkWeights | None = None) -> TrainResult:
    """Mini-batch Adam on normalized windows ``X`` (n, w, 11) and targets ``Y`` (n, 4).

    Shuffling, initialization and dropout masks all derive from ``config.seed``.
    """
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if len(X) == 0:
        raise ValueError("training set is empty")
    if len(X) != len(Y):
        raise ValueError("X and Y differ in length")
    rng = np.random.default_rng(config.seed)
    if weights is None:
        weights = init_weights(kind, seed=int(rng.integers(2**63)), n_in=X.shape[2], hidden=config.hidden,
                               head_hidden=config.head_hidden, n_out=Y.shape[1])
    else:
        weights = weights.copy()
    state = AdamState.zeros_like(weights.theta)
    result = TrainResult(weights)
    n = len(X)
    for epoch in range(config.epochs):
        lr = steplr(config.learning_rate, epoch, config.step_size, config.gamma)
        order = rng.permutation(n)
        total = 0.0
        t0 = time.perf_counter()
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grad = batch_loss_and_grad(X[idx], Y[idx], weights, config.dropout, rng)
            if not math.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise FloatingPointError(
                    f"{kind} training diverged at epoch {epoch}, batch starting {start}: loss={loss}; "
                    f"lower the learning rate ({lr}) or check the data for non-finite values")
            weights.theta = adam_step(weights.theta, grad, state, lr)
            total += loss * len(idx)
        result.epoch_seconds.append(time.perf_counter() - t0)
        result.loss_history.append(total / n)
        logger.info("%s epoch %d/%d lr=%.3g loss=%.6f", kind, epoch + 1, config.epochs, lr, total / n)
    return result


def evaluate(weights: NetworkWeights, X, Y, batch_size: int = 256) -> tuple[float, float]:
    """(MSE, RMSE) of eval-mode predictions in the units of ``Y``."""
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if len(X) == 0:
        raise ValueError("test set is empty")
    sq = 0.0
    for start in range(0, len(X), batch_size):
        pred = predict(X[start:start + batch_size], weights)
        sq += float(np.sum((pred - Y[start:start + batch_size]) ** 2))
    mse = sq / Y.size
    return mse, math.sqrt(mse)
