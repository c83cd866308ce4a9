from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DataError, TrainingDivergenceError


@dataclass(frozen=True)
class MlpConfig:
    hidden: tuple[int, ...] = (64,)
    epochs: int = 200
    batch_size: int = 128
    step_size: float = 1e-2
    momentum: float = 0.9
    weight_decay: float = 1e-4
    standardize: bool = True


@dataclass
class MlpModel:
    """tanh hidden layers, identity output. Inputs/targets are scaled internally
    when ``config.standardize`` is set; the affine maps are part of the model."""

    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    config: MlpConfig
    x_shift: np.ndarray
    x_scale: np.ndarray
    y_shift: float = 0.0
    y_scale: float = 1.0
    loss_history: list[float] = field(default_factory=list)

    def forward(self, Z: np.ndarray) -> np.ndarray:
        """Network output on already-scaled inputs (scaled target units)."""
        a = Z
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            a = np.tanh(a @ W + b)
        return (a @ self.weights[-1] + self.biases[-1])[:, 0]

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.layer_sizes[0]:
            raise DataError(f"expected {self.layer_sizes[0]} features, got shape {X.shape}")
        out = self.forward((X - self.x_shift) / self.x_scale)
        return out * self.y_scale + self.y_shift

    @property
    def n_params(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))


def init_mlp(n_features: int, config: MlpConfig, seed: int) -> MlpModel:
    rng = np.random.default_rng(seed)
    sizes = (n_features, *config.hidden, 1)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / math.sqrt(fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(sizes, weights, biases, config, np.zeros(n_features), np.ones(n_features))


def loss_and_grad(model: MlpModel, Z: np.ndarray, t: np.ndarray, weight_decay: float):
    """0.5*mean((f(Z) - t)^2) + 0.5*decay*sum(W^2) and its gradient (weights, biases)."""
    acts = [Z]
    a = Z
    for W, b in zip(model.weights[:-1], model.biases[:-1]):
        a = np.tanh(a @ W + b)
        acts.append(a)
    out = (a @ model.weights[-1] + model.biases[-1])[:, 0]
    err = out - t
    n = Z.shape[0]
    loss = 0.5 * float(err @ err) / n + 0.5 * weight_decay * sum(float((W * W).sum()) for W in model.weights)

    gW = [None] * len(model.weights)
    gb = [None] * len(model.biases)
    delta = (err / n)[:, None]
    for k in range(len(model.weights) - 1, -1, -1):
        gW[k] = acts[k].T @ delta + weight_decay * model.weights[k]
        gb[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ model.weights[k].T) * (1.0 - acts[k] ** 2)
    return loss, gW, gb


def fit_mlp(X, y, config: MlpConfig | None = None, seed: int = 0) -> MlpModel:
    """Mini-batch SGD with momentum on squared error plus L2 weight decay."""
    config = config or MlpConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
        raise DataError(f"incompatible shapes X{X.shape}, y{y.shape}")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise DataError("non-finite values in MLP input")
    n, p = X.shape
    if not 1 <= config.batch_size <= n:
        raise DataError(f"batch size {config.batch_size} incompatible with {n} rows")

    model = init_mlp(p, config, seed)
    if config.standardize:
        sd = X.std(axis=0)
        model.x_shift = X.mean(axis=0)
        model.x_scale = np.where(sd > 0, sd, 1.0)
        y_sd = float(y.std())
        model.y_shift = float(y.mean())
        model.y_scale = y_sd if y_sd > 0 else 1.0
    Z = (X - model.x_shift) / model.x_scale
    t = (y - model.y_shift) / model.y_scale

    rng = np.random.default_rng([seed, 1])
    vel_W = [np.zeros_like(W) for W in model.weights]
    vel_b = [np.zeros_like(b) for b in model.biases]
    lr, mu, decay = config.step_size, config.momentum, config.weight_decay
    # overflow is reported as a divergence error, not as numpy warnings
    with np.errstate(over="ignore", invalid="ignore"):
        for epoch in range(config.epochs):
            perm = rng.permutation(n)
            for start in range(0, n, config.batch_size):
                batch = perm[start:start + config.batch_size]
                _, gW, gb = loss_and_grad(model, Z[batch], t[batch], decay)
                for k in range(len(model.weights)):
                    vel_W[k] *= mu
                    vel_W[k] -= lr * gW[k]
                    model.weights[k] += vel_W[k]
                    vel_b[k] *= mu
                    vel_b[k] -= lr * gb[k]
                    model.biases[k] += vel_b[k]
            err = model.forward(Z) - t
            loss = 0.5 * float(err @ err) / n + 0.5 * decay * sum(float((W * W).sum()) for W in model.weights)
            if not math.isfinite(loss):
                raise TrainingDivergenceError(f"training loss became non-finite at epoch {epoch}")
            model.loss_history.append(loss)
    return model
