"""Classification (F1, PR-AUC) and prioritisation (APFD, APFD gain, speedup) metrics."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Callable, Collection, Iterable, Sequence

import numpy as np

from .errors import DegenerateResample, NoFailures, NoPositives
from .ranking import Ranking

DEFAULT_REPS = 5000


def f1(labels, scores, threshold: float = 0.5) -> float:
    """F1 of the positive class with ``score >= threshold`` predicted positive."""
    y = np.asarray(labels, dtype=int)
    pred = np.asarray(scores, dtype=float) >= threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def pr_auc(labels, scores) -> float:
    """Step-wise average precision: sum over thresholds of (delta recall) * precision.

    Tied scores form a single threshold, so the value does not depend on the
    order of tied rows.
    """
    y = np.asarray(labels, dtype=int)
    s = np.asarray(scores, dtype=float)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise NoPositives("average precision undefined without positive labels")
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    tp = np.cumsum(y)
    fp = np.cumsum(1 - y)
    last = np.r_[np.flatnonzero(s[1:] != s[:-1]), len(s) - 1]
    tp, fp = tp[last], fp[last]
    precision = tp / (tp + fp)
    recall = tp / n_pos
    d_recall = np.diff(np.r_[0.0, recall])
    return float(np.sum(d_recall * precision))


def _order_of(ranking: Ranking | Sequence[str]) -> list[str]:
    return ranking.suites if isinstance(ranking, Ranking) else list(ranking)


def apfd(ranking: Ranking | Sequence[str], failing: Collection[str]) -> float:
    """1 - sum(TF_i)/(n*m) + 1/(2n); each failing suite stands for one fault."""
    order = _order_of(ranking)
    n = len(order)
    pos = {s: i + 1 for i, s in enumerate(order)}
    tf = [pos[s] for s in failing if s in pos]
    m = len(tf)
    if n == 0 or m == 0:
        raise NoFailures("APFD needs at least one failing suite in the ranking")
    return 1.0 - sum(tf) / (n * m) + 1.0 / (2 * n)


def apfd_gain(predicted, chrono, failing: Collection[str]) -> float:
    if set(_order_of(predicted)) != set(_order_of(chrono)):
        raise ValueError("rankings cover different suites")
    return apfd(predicted, failing) - apfd(chrono, failing)


def first_failure(ranking, failing: Collection[str]) -> int:
    failing = set(failing)
    for i, s in enumerate(_order_of(ranking), 1):
        if s in failing:
            return i
    raise NoFailures("no failing suite in the ranking")


def speedup(predicted, chrono, failing: Collection[str]) -> int:
    """Reduction in first-failure position relative to the chronological order."""
    return first_failure(chrono, failing) - first_failure(predicted, failing)


def fold_speedup(per_commit: Iterable[float]) -> float:
    return float(sum(per_commit))


@dataclass(frozen=True)
class MetricSample:
    name: str
    value: float
    q1: float
    q2: float
    q3: float
    mean: float
    reps: int
    seed: int

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def quartiles(self) -> tuple[float, float, float]:
        return self.q1, self.q2, self.q3


def replicate_rng(seed: int, rep: int, attempt: int = 0) -> np.random.Generator:
    # each replicate owns its stream, so parallel evaluation reproduces the sequential one
    return np.random.default_rng([seed, rep, attempt])


def bootstrap_quartiles(
    metric: Callable[[np.ndarray], float],
    units,
    reps: int = DEFAULT_REPS,
    seed: int = 0,
    require: Callable[[np.ndarray], bool] | None = None,
    name: str = "",
    max_retries: int = 100,
) -> MetricSample:
    """Percentile bootstrap over ``units`` (rows or commits) resampled with replacement.

    ``require`` rejects degenerate resamples (e.g. without positives); those
    are redrawn up to ``max_retries`` times before giving up.
    """
    units = np.asarray(units)
    n = len(units)
    if n < 2:
        raise ValueError("bootstrap needs at least two units")
    values = np.empty(reps)
    for r in range(reps):
        for attempt in range(max_retries + 1):
            sample = units[replicate_rng(seed, r, attempt).integers(0, n, size=n)]
            if require is None or require(sample):
                break
        else:
            raise DegenerateResample(f"replicate {r}: {max_retries} redraws all degenerate")
        values[r] = metric(sample)
    q1, q2, q3 = np.percentile(values, [25, 50, 75], method="linear")
    return MetricSample(name, float(metric(units)), float(q1), float(q2), float(q3),
                        float(values.mean()), reps, seed)
