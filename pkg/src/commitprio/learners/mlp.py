"""Feedforward network: ReLU hidden layers, logistic output, Adam on binary cross-entropy."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..config import TrainConfig
from ..errors import DegenerateLabels, DimensionMismatch, NonFiniteLoss
from .gbdt import LOGIT_CLAMP, sigmoid


@dataclass
class MlpModel:
    weights: list[np.ndarray]   # layer l maps (n, in_l) -> (n, out_l)
    biases: list[np.ndarray]
    mean: np.ndarray
    std: np.ndarray
    feature_names: tuple[str, ...] = ()
    history: dict = field(default_factory=dict)

    @property
    def n_features(self) -> int:
        return self.weights[0].shape[0]

    def logits(self, X: np.ndarray) -> np.ndarray:
        return forward(self.weights, self.biases, (X - self.mean) / self.std)[0]

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(f"model expects {self.n_features} features, got {X.shape[1]}")
        p = sigmoid(np.clip(self.logits(X), -LOGIT_CLAMP, LOGIT_CLAMP))
        return p[0] if single else p


def init_params(sizes: Sequence[int], rng: np.random.Generator):
    weights, biases = [], []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        last = i == len(sizes) - 2
        scale = np.sqrt(1.0 / fan_in) if last else np.sqrt(2.0 / fan_in)
        weights.append(rng.normal(0.0, scale, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return weights, biases


def forward(weights, biases, Z):
    """Returns (logits, activations) where activations[l] is the input to layer l."""
    acts = [Z]
    a = Z
    for W, b in zip(weights[:-1], biases[:-1]):
        a = np.maximum(a @ W + b, 0.0)
        acts.append(a)
    logits = (a @ weights[-1] + biases[-1])[:, 0]
    return logits, acts


def loss_and_grads(weights, biases, Z, y):
    """Mean binary cross-entropy on logits and its exact gradients."""
    logits, acts = forward(weights, biases, Z)
    y = np.asarray(y, dtype=float)
    n = Z.shape[0]
    loss = float(np.mean(np.logaddexp(0.0, logits) - y * logits))
    delta = ((sigmoid(logits) - y) / n)[:, None]
    gW = [None] * len(weights)
    gb = [None] * len(biases)
    for l in range(len(weights) - 1, -1, -1):
        gW[l] = acts[l].T @ delta
        gb[l] = delta.sum(axis=0)
        if l:
            delta = (delta @ weights[l].T) * (acts[l] > 0)
    return loss, gW, gb


class _Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.b1 * self.m[i] + (1 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1 - self.b2) * g * g
            p -= self.lr * (self.m[i] / c1) / (np.sqrt(self.v[i] / c2) + self.eps)


def train_mlp(X, y, config: TrainConfig | None = None,
              feature_names: Sequence[str] = ()) -> MlpModel:
    """Mini-batch Adam with early stopping on a held-out split; best epoch is restored.

    ``config.rounds`` is the epoch budget and ``config.learning_rate`` the
    Adam step size. Standardisation uses the mean/std of the rows given.
    """
    config = config or TrainConfig(learning_rate=1e-3)
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"X shape {X.shape} incompatible with {y.shape[0]} labels")
    if np.isnan(X).any():
        raise ValueError("features contain NaN; impute first")
    if y.min() == y.max():
        raise DegenerateLabels("training rows are single-class")
    rng = np.random.default_rng(config.seed)
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    Z = (X - mean) / std

    weights, biases = init_params((X.shape[1], *config.hidden, 1), rng)
    perm = rng.permutation(len(y))
    n_val = int(round(config.validation_fraction * len(y)))
    val_idx, tr_idx = perm[:n_val], perm[n_val:]
    Ztr, ytr = Z[tr_idx], y[tr_idx]
    Zval, yval = Z[val_idx], y[val_idx]

    params = [*weights, *biases]
    opt = _Adam(params, config.learning_rate)
    nl = len(weights)

    def eval_loss(Zs, ys):
        logits, _ = forward(params[:nl], params[nl:], Zs)
        return float(np.mean(np.logaddexp(0.0, logits) - ys * logits))

    monitor = (Zval, yval) if n_val else (Ztr, ytr)
    best_loss = eval_loss(*monitor)
    initial_loss = best_loss
    best = [p.copy() for p in params]
    stale = 0
    curve = []
    for epoch in range(config.rounds):
        order = rng.permutation(len(ytr))
        for start in range(0, len(order), config.batch_size):
            b = order[start:start + config.batch_size]
            loss, gW, gb = loss_and_grads(params[:nl], params[nl:], Ztr[b], ytr[b])
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"loss {loss} at epoch {epoch}, batch starting {start}")
            opt.step(params, [*gW, *gb])
        current = eval_loss(*monitor)
        if not np.isfinite(current):
            raise NonFiniteLoss(f"monitor loss {current} at epoch {epoch}")
        curve.append(current)
        if current < best_loss - 1e-12:
            best_loss, best, stale = current, [p.copy() for p in params], 0
        else:
            stale += 1
            if n_val and stale >= config.patience:
                break
    history = {"initial_loss": initial_loss, "best_loss": best_loss,
               "epochs_run": len(curve), "monitor_curve": curve}
    return MlpModel(weights=best[:nl], biases=best[nl:], mean=mean, std=std,
                    feature_names=tuple(feature_names), history=history)
