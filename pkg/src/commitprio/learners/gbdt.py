"""Second-order gradient-boosted regression trees on weighted logistic loss.

Each round fits a depth-limited tree to gradient/hessian statistics of the
current margins with exact greedy split search, L2-regularised Newton leaf
values and shrinkage. Positive rows carry ``pos_weight`` (default: the
negative/positive ratio of the training rows).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..config import TrainConfig
from ..errors import DegenerateLabels, DimensionMismatch

LOGIT_CLAMP = 10.0


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def weighted_logloss(y, margin, w=None) -> float:
    """sum_i w_i * [log(1 + e^m_i) - y_i m_i] / sum_i w_i."""
    y = np.asarray(y, dtype=float)
    m = np.asarray(margin, dtype=float)
    per_row = np.logaddexp(0.0, m) - y * m
    if w is None:
        return float(per_row.mean())
    w = np.asarray(w, dtype=float)
    return float((w * per_row).sum() / w.sum())


@dataclass
class Tree:
    """Flat array tree; ``feature[i] == -1`` marks a leaf. Rows with x < threshold go left."""
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray

    @property
    def n_splits(self) -> int:
        return int((self.feature >= 0).sum())

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=int)
        rows = np.arange(X.shape[0])
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                break
            r = rows[inner]
            nd = node[inner]
            go_left = X[r, f[inner]] < self.threshold[nd]
            node[inner] = np.where(go_left, self.left[nd], self.right[nd])
        return self.value[node]

    @classmethod
    def leaf(cls, value: float) -> "Tree":
        return cls(np.array([-1]), np.array([0.0]), np.array([-1]), np.array([-1]),
                   np.array([float(value)]), np.array([0.0]))


@dataclass
class GbdtModel:
    trees: list[Tree]
    shrinkage: float
    base_score: float
    pos_weight: float
    n_features: int
    feature_names: tuple[str, ...] = ()
    gain_by_feature: np.ndarray = field(default_factory=lambda: np.zeros(0))
    train_loss: list[float] = field(default_factory=list)

    def margin(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        m = np.full(X.shape[0], self.base_score)
        for t in self.trees:
            m += t.predict(X)
        return m

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        single = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != self.n_features:
            raise DimensionMismatch(f"model expects {self.n_features} features, got {X.shape[1]}")
        p = sigmoid(np.clip(self.margin(X), -LOGIT_CLAMP, LOGIT_CLAMP))
        return p[0] if single else p


def _best_split(x: np.ndarray, g: np.ndarray, h: np.ndarray, G: float, H: float,
                l2: float, min_child_weight: float):
    order = np.argsort(x, kind="stable")
    xs = x[order]
    gl = np.cumsum(g[order])[:-1]
    hl = np.cumsum(h[order])[:-1]
    distinct = xs[:-1] < xs[1:]
    gr, hr = G - gl, H - hl
    ok = distinct & (hl >= min_child_weight) & (hr >= min_child_weight)
    if not ok.any():
        return None
    gain = 0.5 * (gl ** 2 / (hl + l2) + gr ** 2 / (hr + l2) - G ** 2 / (H + l2))
    gain = np.where(ok, gain, -np.inf)
    k = int(np.argmax(gain))  # first maximum -> lowest threshold
    if not gain[k] > 0.0:
        return None
    lo, hi = xs[k], xs[k + 1]
    thr = lo + (hi - lo) / 2.0
    if not lo < thr:
        thr = hi
    return float(gain[k]), float(thr)


def _fit_tree(X, g, h, config: TrainConfig, gains: np.ndarray) -> Tree:
    feature, threshold, left, right, value, gain = [], [], [], [], [], []

    def new_node():
        for lst, v in ((feature, -1), (threshold, 0.0), (left, -1), (right, -1), (value, 0.0), (gain, 0.0)):
            lst.append(v)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.arange(X.shape[0]), 0)]
    while stack:
        node, idx, depth = stack.pop()
        G, H = float(g[idx].sum()), float(h[idx].sum())
        best = None
        if depth < config.max_depth and idx.size >= 2:
            for j in range(X.shape[1]):
                got = _best_split(X[idx, j], g[idx], h[idx], G, H, config.l2, config.min_child_weight)
                if got is not None and (best is None or got[0] > best[0]):
                    best = (got[0], got[1], j)
        if best is None:
            value[node] = -G / (H + config.l2) * config.learning_rate
            continue
        split_gain, thr, j = best
        go_left = X[idx, j] < thr
        lnode, rnode = new_node(), new_node()
        feature[node], threshold[node], left[node], right[node], gain[node] = j, thr, lnode, rnode, split_gain
        gains[j] += split_gain
        # right pushed first so the left subtree is numbered first
        stack.append((rnode, idx[~go_left], depth + 1))
        stack.append((lnode, idx[go_left], depth + 1))
    return Tree(np.array(feature, dtype=int), np.array(threshold, dtype=float),
                np.array(left, dtype=int), np.array(right, dtype=int),
                np.array(value, dtype=float), np.array(gain, dtype=float))


def train_gbdt(X, y, config: TrainConfig | None = None,
               feature_names: Sequence[str] = ()) -> GbdtModel:
    config = config or TrainConfig()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"X shape {X.shape} incompatible with {y.shape[0]} labels")
    if np.isnan(X).any():
        raise ValueError("features contain NaN; impute first")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise DegenerateLabels(f"training rows are single-class ({n_pos} positive, {n_neg} negative)")
    pos_weight = float(config.pos_weight) if config.pos_weight is not None else n_neg / n_pos
    w = np.where(y == 1, pos_weight, 1.0)
    base = float(np.log((w * y).sum() / (w * (1 - y)).sum()))

    margin = np.full(X.shape[0], base)
    gains = np.zeros(X.shape[1])
    trees: list[Tree] = []
    losses = [weighted_logloss(y, margin, w)]
    for _ in range(config.rounds):
        p = sigmoid(margin)
        g = w * (p - y)
        h = w * p * (1.0 - p)
        tree = _fit_tree(X, g, h, config, gains)
        trees.append(tree)
        margin = margin + tree.predict(X)
        losses.append(weighted_logloss(y, margin, w))
    return GbdtModel(trees=trees, shrinkage=config.learning_rate, base_score=base,
                     pos_weight=pos_weight, n_features=X.shape[1],
                     feature_names=tuple(feature_names), gain_by_feature=gains,
                     train_loss=losses)


def feature_importance(model: GbdtModel) -> list[tuple[str, float]]:
    """Total split gain per feature normalised to sum to 1, highest first."""
    names = model.feature_names or tuple(f"f{j}" for j in range(model.n_features))
    gains = np.asarray(model.gain_by_feature, dtype=float)
    if gains.size == 0:
        gains = np.zeros(model.n_features)
    total = gains.sum()
    shares = gains / total if total > 0 else np.zeros_like(gains)
    order = sorted(range(len(names)), key=lambda j: (-shares[j], j))
    return [(names[j], float(shares[j])) for j in order]
