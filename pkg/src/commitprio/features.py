"""Per-(commit, suite) feature assembly, imputation, and training-set rebalancing.

Assembly walks a project's commits in sequence order and only ever reads
executions of *earlier* commits plus the current diff, so features of commit
``t`` cannot depend on anything recorded at or after ``t``.

Missing values are NaN until :func:`impute` fills them. Two cases produce NaN:
an unmapped suite (diff-derived columns are unknown, which is different from a
structural zero) and a cold-start suite with no prior execution.
"""

from __future__ import annotations

import csv
import math
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .config import FeatureConfig
from .corpus import (CommitRecord, CoverageMap, ProjectData, TestSuiteId, is_test_path,
                     linked_classes, map_suite_to_classes, path_to_class)
from .errors import TooFewMinority, UnimputableField

FEATURE_NAMES: tuple[str, ...] = (
    "n_files_changed",
    "lines_added",
    "lines_removed",
    "churn",
    "prev_pass_rate",
    "weighted_pass_rate",
    "coverage_ratio",
    "cov_diff_signal",
)
DIFF_FEATURES: tuple[str, ...] = (
    "n_files_changed", "lines_added", "lines_removed", "churn", "cov_diff_signal",
)


@dataclass(frozen=True)
class FeatureVector:
    n_files_changed: float
    lines_added: float
    lines_removed: float
    churn: float
    prev_pass_rate: float
    weighted_pass_rate: float
    coverage_ratio: float
    cov_diff_signal: float
    imputed_mask: tuple[bool, ...] = (False,) * len(FEATURE_NAMES)

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f) for f in FEATURE_NAMES], dtype=float)

    @classmethod
    def from_array(cls, values: Sequence[float], mask: Sequence[bool] | None = None) -> "FeatureVector":
        mask = tuple(bool(m) for m in mask) if mask is not None else (False,) * len(FEATURE_NAMES)
        return cls(*(float(v) for v in values), imputed_mask=mask)


@dataclass(frozen=True)
class SuiteObservation:
    commit_id: str
    suite: TestSuiteId
    features: FeatureVector
    label: int
    order_index: int
    sequence_index: int


@dataclass(frozen=True)
class PastRun:
    """One earlier execution of a suite, as seen from a later commit."""
    sequence_index: int
    passed: bool
    commit_churn: int


# ---------------------------------------------------------------------------
# diff-derived features
# ---------------------------------------------------------------------------

def modified_classes(commit: CommitRecord) -> dict[str, tuple[int, int, int]]:
    """Production class -> (files, added, removed) for one commit."""
    out: dict[str, tuple[int, int, int]] = {}
    for d in commit.diffs:
        cls = path_to_class(d.path)
        if cls is None or is_test_path(d.path):
            continue
        f, a, r = out.get(cls, (0, 0, 0))
        out[cls] = (f + 1, a + d.lines_added, r + d.lines_removed)
    return out


def _covered_changes(suite, commit, mapping, coverage):
    linked = linked_classes(suite, mapping, coverage)
    if not linked:
        return None
    files = added = removed = 0
    for cls, (f, a, r) in modified_classes(commit).items():
        if cls in linked:
            files += f
            added += a
            removed += r
    return files, added, removed


def diff_features(
    suite: TestSuiteId,
    commit: CommitRecord,
    mapping: Mapping[TestSuiteId, frozenset[str]],
    coverage: Mapping[TestSuiteId, CoverageMap],
) -> tuple[float, float, float, float] | None:
    """(n_files_changed, lines_added, lines_removed, churn) over linked & modified classes.

    Returns None for an unmapped suite; an empty intersection is a genuine zero.
    """
    got = _covered_changes(suite, commit, mapping, coverage)
    if got is None:
        return None
    files, added, removed = got
    return float(files), float(added), float(removed), float(added + removed)


def cov_diff_signal(
    suite: TestSuiteId,
    commit: CommitRecord,
    mapping: Mapping[TestSuiteId, frozenset[str]],
    coverage: Mapping[TestSuiteId, CoverageMap],
) -> float | None:
    """Share of the commit's total churn that lands in classes the suite exercises."""
    got = _covered_changes(suite, commit, mapping, coverage)
    if got is None:
        return None
    total = commit.churn
    if total == 0:
        return 0.0
    return (got[1] + got[2]) / total


# ---------------------------------------------------------------------------
# history features
# ---------------------------------------------------------------------------

def _prior(runs: Iterable[PastRun], current_seq: int) -> list[PastRun]:
    return sorted((r for r in runs if r.sequence_index < current_seq), key=lambda r: r.sequence_index)


def prev_pass_rate(runs: Iterable[PastRun], current_seq: int) -> float | None:
    prior = _prior(runs, current_seq)
    if not prior:
        return None
    return 1.0 if prior[-1].passed else 0.0


def churn_similarity(churn_now: int, churn_then: int) -> float:
    return 1.0 / (1.0 + abs(math.log((churn_now + 1) / (churn_then + 1))))


def weighted_pass_rate(
    runs: Iterable[PastRun],
    current_seq: int,
    current_churn: int,
    decay: float = 0.8,
    window: int = 10,
) -> float | None:
    """Recency- and churn-similarity-weighted mean of past pass indicators.

    Weight of a past run is ``decay**age * sim`` with ``age`` the sequence
    distance to the current commit and ``sim`` the log-ratio similarity of the
    two commits' total churn. Only the last ``window`` runs count.
    """
    prior = _prior(runs, current_seq)[-window:]
    if not prior:
        return None
    num = den = 0.0
    for r in prior:
        w = decay ** (current_seq - r.sequence_index) * churn_similarity(current_churn, r.commit_churn)
        num += w * (1.0 if r.passed else 0.0)
        den += w
    return num / den


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------

def _nan_if_none(v):
    return float("nan") if v is None else float(v)


def build_observations(project: ProjectData, config: FeatureConfig | None = None) -> list[SuiteObservation]:
    """Raw (pre-imputation) observations for every execution in the project."""
    config = config or FeatureConfig()
    by_commit: dict[str, list] = defaultdict(list)
    for e in project.executions:
        by_commit[e.commit_id].append(e)
    runs: dict[TestSuiteId, list[PastRun]] = defaultdict(list)
    out: list[SuiteObservation] = []
    suites = project.suites
    # class universe as of the current commit: coverage snapshot plus every class
    # touched so far; a class first seen in a later diff must not shape today's mapping
    known: set[str] = set()
    for cov in project.coverage.values():
        known |= cov.covered_classes
    mapping: dict[TestSuiteId, frozenset[str]] | None = None
    ratios: dict[TestSuiteId, float] = {}
    for commit in project.commits:
        fresh = set(modified_classes(commit)) - known
        if fresh or mapping is None:
            known |= fresh
            mapping = {s: map_suite_to_classes(s, known) if known else frozenset() for s in suites}
            ratios = {s: c.coverage_ratio if c.ratio_supplied else
                      (len(c.covered_classes) / len(known) if known else 0.0)
                      for s, c in project.coverage.items()}
        execs = sorted(by_commit.get(commit.commit_id, ()), key=lambda e: e.order_index)
        churn_now = commit.churn
        for e in execs:
            s = e.suite
            diff = diff_features(s, commit, mapping, project.coverage)
            signal = cov_diff_signal(s, commit, mapping, project.coverage)
            n_files, added, removed, churn = diff if diff is not None else (None,) * 4
            values = (
                n_files, added, removed, churn,
                prev_pass_rate(runs[s], commit.sequence_index),
                weighted_pass_rate(runs[s], commit.sequence_index, churn_now,
                                   config.decay, config.window),
                ratios.get(s),
                signal,
            )
            out.append(SuiteObservation(
                commit_id=commit.commit_id,
                suite=s,
                features=FeatureVector(*(_nan_if_none(v) for v in values)),
                label=int(e.failed),
                order_index=e.order_index,
                sequence_index=commit.sequence_index,
            ))
        # history is extended only after every suite of this commit is featurised
        for e in execs:
            runs[e.suite].append(PastRun(commit.sequence_index, not e.failed, churn_now))
    return out


@dataclass
class Dataset:
    """Column-oriented observation table; row order is (project, sequence, order_index)."""
    X: np.ndarray
    mask: np.ndarray
    y: np.ndarray
    project: np.ndarray
    commit_id: np.ndarray
    sequence_index: np.ndarray
    suite: np.ndarray
    order_index: np.ndarray
    feature_names: tuple[str, ...] = FEATURE_NAMES

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows)
        return Dataset(self.X[rows], self.mask[rows], self.y[rows], self.project[rows],
                       self.commit_id[rows], self.sequence_index[rows], self.suite[rows],
                       self.order_index[rows], self.feature_names)

    def columns(self, names: Sequence[str]) -> np.ndarray:
        idx = [self.feature_names.index(n) for n in names]
        return self.X[:, idx]

    def column(self, name: str) -> np.ndarray:
        return self.X[:, self.feature_names.index(name)]

    @classmethod
    def from_observations(cls, project: str, obs: Sequence[SuiteObservation]) -> "Dataset":
        n = len(obs)
        X = np.array([o.features.as_array() for o in obs], dtype=float).reshape(n, len(FEATURE_NAMES))
        mask = np.array([o.features.imputed_mask for o in obs], dtype=bool).reshape(n, len(FEATURE_NAMES))
        return cls(
            X=X,
            mask=mask,
            y=np.array([o.label for o in obs], dtype=int),
            project=np.array([project] * n, dtype=object),
            commit_id=np.array([o.commit_id for o in obs], dtype=object),
            sequence_index=np.array([o.sequence_index for o in obs], dtype=int),
            suite=np.array([o.suite.class_path for o in obs], dtype=object),
            order_index=np.array([o.order_index for o in obs], dtype=int),
        )

    @classmethod
    def concat(cls, parts: Sequence["Dataset"]) -> "Dataset":
        return cls(*(np.concatenate([getattr(p, f) for p in parts]) for f in
                     ("X", "mask", "y", "project", "commit_id", "sequence_index", "suite", "order_index")),
                   feature_names=parts[0].feature_names)


def build_dataset(projects: Iterable[ProjectData], config: FeatureConfig | None = None) -> Dataset:
    parts = [Dataset.from_observations(p.name, build_observations(p, config)) for p in projects]
    return Dataset.concat(parts)


# ---------------------------------------------------------------------------
# imputation
# ---------------------------------------------------------------------------

def global_medians(data: Dataset) -> np.ndarray:
    """Per-feature median of observed (non-NaN) values; NaN where a column has none."""
    out = np.full(data.X.shape[1], np.nan)
    for j in range(data.X.shape[1]):
        col = data.X[:, j]
        col = col[~np.isnan(col)]
        if col.size:
            out[j] = float(np.median(col))
    return out


def ewma(values: Sequence[float], alpha: float) -> float:
    """Most-recent-weighted recurrence ``e = alpha*v + (1-alpha)*e``, seeded with the first value."""
    it = iter(values)
    e = float(next(it))
    for v in it:
        e = alpha * float(v) + (1.0 - alpha) * e
    return e


def impute(data: Dataset, alpha: float = 0.3, medians: np.ndarray | None = None) -> Dataset:
    """Fill NaNs: suite EWMA, then same-commit median, then reference median.

    ``medians`` should come from :func:`global_medians` on the training rows;
    when omitted they are computed from ``data`` itself. Churn is re-derived as
    added + removed wherever it was imputed so the identity holds exactly.
    """
    if medians is None:
        medians = global_medians(data)
    X = data.X.copy()
    mask = data.mask.copy()
    missing = np.isnan(data.X)
    if not missing.any():
        return Dataset(X, mask, *(getattr(data, f) for f in
                                  ("y", "project", "commit_id", "sequence_index", "suite", "order_index")),
                       feature_names=data.feature_names)
    order = np.lexsort((data.order_index, data.sequence_index, data.project))
    # group rows by (project, commit) in sequence order
    groups: list[list[int]] = []
    last = None
    for r in order:
        key = (data.project[r], data.sequence_index[r])
        if key != last:
            groups.append([])
            last = key
        groups[-1].append(int(r))

    n_feat = X.shape[1]
    state: dict[tuple[str, str], list[float | None]] = {}
    for rows in groups:
        for j in range(n_feat):
            observed = [data.X[r, j] for r in rows if not missing[r, j]]
            local = float(np.median(observed)) if observed else None
            for r in rows:
                if not missing[r, j]:
                    continue
                key = (data.project[r], data.suite[r])
                e = state.get(key, [None] * n_feat)[j]
                if e is not None:
                    X[r, j] = e
                elif local is not None:
                    X[r, j] = local
                elif not np.isnan(medians[j]):
                    X[r, j] = medians[j]
                else:
                    raise UnimputableField(
                        f"{data.feature_names[j]} for {data.suite[r]} at {data.commit_id[r]}: "
                        "no suite history, no same-commit value, no reference median")
                mask[r, j] = True
        # EWMA state advances on observed values only
        for r in rows:
            key = (data.project[r], data.suite[r])
            st = state.setdefault(key, [None] * n_feat)
            for j in range(n_feat):
                if not missing[r, j]:
                    v = data.X[r, j]
                    st[j] = v if st[j] is None else alpha * v + (1.0 - alpha) * st[j]

    names = data.feature_names
    if "churn" in names:
        c, a, rm = names.index("churn"), names.index("lines_added"), names.index("lines_removed")
        fix = mask[:, c]
        X[fix, c] = X[fix, a] + X[fix, rm]
    return Dataset(X, mask, data.y, data.project, data.commit_id, data.sequence_index,
                   data.suite, data.order_index, names)


# ---------------------------------------------------------------------------
# rebalancing
# ---------------------------------------------------------------------------

def standardize_params(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return mean, std


@dataclass
class Rebalanced:
    X: np.ndarray
    y: np.ndarray
    # row indices into the input for kept original rows, in output order
    kept: np.ndarray
    # (base, neighbour) input indices for each synthetic row, in output order
    parents: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=int))
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))


def rebalance_smote_undersample(
    X: np.ndarray,
    y: np.ndarray,
    k: int = 5,
    target_ratio: float = 1.0,
    oversample_ratio: float = 0.5,
    seed: int = 0,
) -> Rebalanced:
    """SMOTE the minority up to ``oversample_ratio`` of the majority, then undersample.

    Final minority:majority equals ``target_ratio`` up to rounding. Output
    rows are: kept majority, kept original minority, then synthetic minority.
    Neighbours are found on features standardised with the input's mean/std.
    """
    if not 0.0 < target_ratio <= 1.0:
        raise ValueError("target_ratio must be in (0, 1]")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=int)
    rng = np.random.default_rng(seed)
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2:
        raise ValueError("rebalancing needs both classes")
    minority_label = classes[np.argmin(counts)] if counts[0] != counts[1] else classes[1]
    maj_idx = np.flatnonzero(y != minority_label)
    min_idx = np.flatnonzero(y == minority_label)
    n_maj, n_min = len(maj_idx), len(min_idx)

    n_min_new = max(n_min, int(round(min(oversample_ratio, target_ratio) * n_maj)))
    n_maj_new = min(n_maj, int(round(n_min_new / target_ratio)))
    if n_min_new > round(target_ratio * n_maj_new):
        n_min_new = int(round(target_ratio * n_maj_new))

    kept_maj = np.sort(rng.choice(maj_idx, size=n_maj_new, replace=False)) if n_maj_new < n_maj else maj_idx
    if n_min_new <= n_min:
        kept_min = np.sort(rng.choice(min_idx, size=n_min_new, replace=False)) if n_min_new < n_min else min_idx
        n_syn = 0
    else:
        kept_min = min_idx
        n_syn = n_min_new - n_min

    parents = np.zeros((0, 2), dtype=int)
    weights = np.zeros(0)
    synth = np.zeros((0, X.shape[1]))
    if n_syn:
        if n_min <= k:
            warnings.warn(TooFewMinority(
                f"{n_min} minority rows <= k={k}; oversampling by duplication"), stacklevel=2)
            base = rng.choice(min_idx, size=n_syn, replace=True)
            parents = np.stack([base, base], axis=1)
            weights = np.zeros(n_syn)
            synth = X[base]
        else:
            mean, std = standardize_params(X)
            Z = (X[min_idx] - mean) / std
            _, nn = cKDTree(Z).query(Z, k=k + 1)
            # drop self; duplicates can push self out of column 0, so filter explicitly
            neighbours = np.empty((n_min, k), dtype=int)
            for i in range(n_min):
                row = [j for j in nn[i] if j != i][:k]
                neighbours[i] = row
            base_local = rng.integers(n_min, size=n_syn)
            pick = rng.integers(k, size=n_syn)
            nb_local = neighbours[base_local, pick]
            weights = rng.random(n_syn)
            a, b = X[min_idx[base_local]], X[min_idx[nb_local]]
            synth = a + weights[:, None] * (b - a)
            parents = np.stack([min_idx[base_local], min_idx[nb_local]], axis=1)

    kept = np.concatenate([kept_maj, kept_min])
    X_out = np.vstack([X[kept], synth])
    y_out = np.concatenate([y[kept], np.full(n_syn, minority_label, dtype=int)])
    return Rebalanced(X_out, y_out, kept, parents, weights)


# ---------------------------------------------------------------------------
# dataset.csv
# ---------------------------------------------------------------------------

DATASET_COLUMNS: tuple[str, ...] = (
    ("project", "commit_id", "sequence_index", "suite", "order_index")
    + FEATURE_NAMES
    + tuple(f"imputed_{n}" for n in FEATURE_NAMES)
    + ("label", "fold")
)


def write_dataset_csv(data: Dataset, path: str | Path) -> None:
    """One row per observation; ``fold`` names the leave-one-project-out fold testing it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DATASET_COLUMNS)
        for i in range(len(data)):
            w.writerow(
                [data.project[i], data.commit_id[i], int(data.sequence_index[i]), data.suite[i],
                 int(data.order_index[i])]
                + [repr(float(v)) for v in data.X[i]]
                + [int(m) for m in data.mask[i]]
                + [int(data.y[i]), data.project[i]]
            )


def read_dataset_csv(path: str | Path) -> Dataset:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    n = len(rows)
    X = np.array([[float(r[c]) for c in FEATURE_NAMES] for r in rows], dtype=float).reshape(n, len(FEATURE_NAMES))
    mask = np.array([[r[f"imputed_{c}"] == "1" for c in FEATURE_NAMES] for r in rows],
                    dtype=bool).reshape(n, len(FEATURE_NAMES))
    return Dataset(
        X=X, mask=mask,
        y=np.array([int(r["label"]) for r in rows], dtype=int),
        project=np.array([r["project"] for r in rows], dtype=object),
        commit_id=np.array([r["commit_id"] for r in rows], dtype=object),
        sequence_index=np.array([int(r["sequence_index"]) for r in rows], dtype=int),
        suite=np.array([r["suite"] for r in rows], dtype=object),
        order_index=np.array([int(r["order_index"]) for r in rows], dtype=int),
    )
