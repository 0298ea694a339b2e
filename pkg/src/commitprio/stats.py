"""Paired comparison of the with-diff and without-diff scenarios across folds."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .errors import AllZeroDifferences

ALTERNATIVES = ("greater", "less", "two-sided")


def midranks(values: Sequence[float]) -> np.ndarray:
    """1-based ranks with ties sharing the mean of the positions they span."""
    v = np.asarray(values, dtype=float)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(len(v))
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def signed_rank_null(doubled_ranks: Sequence[int]) -> np.ndarray:
    """Counts of sign assignments per value of 2*W+, over all 2^n assignments.

    Entry ``s`` is the number of assignments whose doubled positive-rank sum
    equals ``s``; built by adding one rank at a time (each rank is either in
    W+ or not), which counts every assignment exactly once.
    """
    total = int(sum(doubled_ranks))
    counts = np.zeros(total + 1, dtype=object)
    counts[0] = 1
    for r in doubled_ranks:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    return counts


def wilcoxon_signed_rank(differences: Sequence[float], alternative: str = "greater") -> float:
    """Exact signed-rank p-value; zeros dropped, tied magnitudes get midranks.

    ``greater`` is P(W+ >= observed) under the symmetric null.
    """
    if alternative not in ALTERNATIVES:
        raise ValueError(f"alternative must be one of {ALTERNATIVES}")
    d = np.asarray(differences, dtype=float)
    d = d[d != 0]
    if d.size == 0:
        raise AllZeroDifferences("every paired difference is zero")
    doubled = np.rint(2 * midranks(np.abs(d))).astype(int)
    observed = int(doubled[d > 0].sum())
    counts = signed_rank_null(doubled.tolist())
    denom = 2 ** d.size
    p_ge = int(sum(counts[observed:])) / denom
    p_le = int(sum(counts[: observed + 1])) / denom
    if alternative == "greater":
        return p_ge
    if alternative == "less":
        return p_le
    return min(1.0, 2.0 * min(p_ge, p_le))


def cliffs_delta(x: Sequence[float], y: Sequence[float]) -> float:
    """(#{x_i > y_j} - #{x_i < y_j}) / (|x| |y|)."""
    x = np.asarray(x, dtype=float)
    ys = np.sort(np.asarray(y, dtype=float))
    if x.size == 0 or ys.size == 0:
        raise ValueError("both samples must be non-empty")
    below = np.searchsorted(ys, x, side="left")          # y_j < x_i
    above = ys.size - np.searchsorted(ys, x, side="right")  # y_j > x_i
    return float((below.sum() - above.sum()) / (x.size * ys.size))


def mean_delta_ci(deltas: Sequence[float], reps: int = 10000, level: float = 0.95,
                  seed: int = 0) -> tuple[float, float]:
    """Percentile-bootstrap interval for the mean of per-fold deltas."""
    d = np.asarray(deltas, dtype=float)
    if d.size < 2:
        raise ValueError("need at least two fold deltas")
    rng = np.random.default_rng(seed)
    means = d[rng.integers(0, d.size, size=(reps, d.size))].mean(axis=1)
    tail = (1.0 - level) / 2.0 * 100.0
    lo, hi = np.percentile(means, [tail, 100.0 - tail], method="linear")
    return float(lo), float(hi)


@dataclass(frozen=True)
class PairedComparison:
    model: str
    metric: str
    folds: tuple[str, ...]
    with_features: tuple[float, ...]
    without_features: tuple[float, ...]
    cliffs_delta: float
    wilcoxon_p: float
    mean_delta_ci: tuple[float, float]

    def to_dict(self) -> dict:
        return asdict(self)


def compare(model: str, metric: str, folds: Sequence[str], with_vals: Sequence[float],
            without_vals: Sequence[float], ci_reps: int = 10000, seed: int = 0) -> PairedComparison:
    if len(with_vals) != len(without_vals):
        raise ValueError("paired samples must have equal length")
    deltas = np.asarray(with_vals, dtype=float) - np.asarray(without_vals, dtype=float)
    try:
        p = wilcoxon_signed_rank(deltas, "greater")
    except AllZeroDifferences:
        p = 1.0
    ci = mean_delta_ci(deltas, reps=ci_reps, seed=seed) if len(deltas) >= 2 else (float("nan"),) * 2
    return PairedComparison(model, metric, tuple(folds), tuple(float(v) for v in with_vals),
                            tuple(float(v) for v in without_vals),
                            cliffs_delta(with_vals, without_vals), p, ci)
