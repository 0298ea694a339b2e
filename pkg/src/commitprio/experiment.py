"""Leave-one-project-out evaluation of both learners with and without diff features."""

from __future__ import annotations

import csv
import json
import logging
import zlib
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .config import ExperimentConfig
from .corpus import Corpus
from .errors import TooFewProjects
from .features import (DIFF_FEATURES, FEATURE_NAMES, Dataset, build_dataset, global_medians, impute,
                       rebalance_smote_undersample)
from .learners import feature_importance, save_model, train_gbdt, train_mlp
from .metrics import MetricSample, apfd_gain, bootstrap_quartiles, f1, pr_auc, speedup
from .ranking import Ranking, chronological, prioritize, write_ranking_csv
from .stats import PairedComparison, compare

log = logging.getLogger(__name__)

WITH_DIFF = "with_diff"
WITHOUT_DIFF = "without_diff"
SCENARIOS = (WITH_DIFF, WITHOUT_DIFF)
METRICS = ("F1", "PR-AUC", "APFD_gain", "speedup")
DEGENERATE_REASON = "degenerate: single-class test fold"


@dataclass(frozen=True)
class FoldSpec:
    test_project: str
    train_projects: tuple[str, ...]
    excluded: bool = False
    reason: str | None = None


@dataclass
class FoldReport:
    fold: str
    model: str
    scenario: str
    metrics: dict[str, MetricSample]
    importance: list[tuple[str, float]] | None = None
    n_test_rows: int = 0
    n_failing_commits: int = 0


@dataclass
class ExperimentResult:
    folds: list[FoldSpec]
    reports: list[FoldReport]
    stats: list[PairedComparison]
    rankings: dict[tuple[str, str, str], list[Ranking]] = field(default_factory=dict)
    models: dict[tuple[str, str, str], object] = field(default_factory=dict)
    config: ExperimentConfig | None = None


def scenario_features(scenario: str, drop_cov_diff: bool = True) -> tuple[str, ...]:
    if scenario == WITH_DIFF:
        return FEATURE_NAMES
    dropped = set(DIFF_FEATURES) if drop_cov_diff else set(DIFF_FEATURES) - {"cov_diff_signal"}
    return tuple(f for f in FEATURE_NAMES if f not in dropped)


def make_folds(projects: Sequence[str], labels: Mapping[str, np.ndarray] | None = None) -> list[FoldSpec]:
    """One fold per project; folds whose test labels are single-class are marked excluded."""
    projects = sorted(projects)
    if len(projects) < 2:
        raise TooFewProjects(f"leave-one-project-out needs >= 2 projects, got {len(projects)}")
    folds = []
    for p in projects:
        train = tuple(q for q in projects if q != p)
        y = None if labels is None else np.asarray(labels[p])
        degenerate = bool(y is not None and (y.size == 0 or y.min() == y.max()))
        folds.append(FoldSpec(p, train, degenerate, DEGENERATE_REASON if degenerate else None))
    return folds


def derive_seed(master: int, *parts: str) -> int:
    tag = zlib.crc32("/".join(parts).encode())
    return int(np.random.SeedSequence([master, tag]).generate_state(1)[0])


def _commit_groups(data: Dataset) -> list[np.ndarray]:
    order = np.lexsort((data.order_index, data.sequence_index))
    groups, start = [], 0
    seqs = data.sequence_index[order]
    for k in range(1, len(order) + 1):
        if k == len(order) or seqs[k] != seqs[start]:
            groups.append(order[start:k])
            start = k
    return groups


def rank_commits(data: Dataset, scores: np.ndarray, use_signal: bool) -> tuple[list[Ranking], list[Ranking]]:
    """Predicted and chronological rankings for every commit in a single-project dataset."""
    signal = data.column("cov_diff_signal")
    predicted, chrono = [], []
    for rows in _commit_groups(data):
        cid = str(data.commit_id[rows[0]])
        sc = {str(data.suite[r]): float(scores[r]) for r in rows}
        sig = {str(data.suite[r]): float(signal[r]) for r in rows} if use_signal else None
        predicted.append(prioritize(cid, sc, sig))
        chrono.append(chronological(cid, {str(data.suite[r]): int(data.order_index[r]) for r in rows}))
    return predicted, chrono


def _has_positive(sample: np.ndarray) -> bool:
    return bool(sample[:, 0].any())


def evaluate_cell(data: Dataset, scores: np.ndarray, predicted: list[Ranking], chrono: list[Ranking],
                  reps: int, threshold: float, seeds: Mapping[str, int]) -> tuple[dict[str, MetricSample], int]:
    rows = np.column_stack([data.y.astype(float), scores])
    metrics = {
        "F1": bootstrap_quartiles(lambda s: f1(s[:, 0], s[:, 1], threshold), rows, reps,
                                  seeds["F1"], _has_positive, "F1"),
        "PR-AUC": bootstrap_quartiles(lambda s: pr_auc(s[:, 0], s[:, 1]), rows, reps,
                                      seeds["PR-AUC"], _has_positive, "PR-AUC"),
    }
    failing_by_commit: dict[str, set[str]] = {}
    for i in np.flatnonzero(data.y == 1):
        failing_by_commit.setdefault(str(data.commit_id[i]), set()).add(str(data.suite[i]))
    gains, speedups = [], []
    for pr, ch in zip(predicted, chrono):
        failing = failing_by_commit.get(pr.commit_id)
        if not failing:
            continue
        gains.append(apfd_gain(pr, ch, failing))
        speedups.append(speedup(pr, ch, failing))
    if len(gains) >= 2:
        metrics["APFD_gain"] = bootstrap_quartiles(np.mean, np.array(gains), reps, seeds["APFD_gain"],
                                                   name="APFD_gain")
        metrics["speedup"] = bootstrap_quartiles(np.sum, np.array(speedups, dtype=float), reps,
                                                 seeds["speedup"], name="speedup")
    return metrics, len(gains)


def fit_model(kind: str, X: np.ndarray, y: np.ndarray, names: Sequence[str], config: ExperimentConfig, seed: int):
    if kind == "gbdt":
        return train_gbdt(X, y, replace(config.gbdt, seed=seed), names)
    rb = config.rebalance
    bal = rebalance_smote_undersample(X, y, rb.k, rb.target_ratio, rb.oversample_ratio, seed)
    return train_mlp(bal.X, bal.y, replace(config.mlp, seed=seed), names)


def split_and_impute(data: Dataset, train_projects: Sequence[str], test_project: str,
                     alpha: float = 0.3) -> tuple[Dataset, Dataset]:
    """Training and test rows, both imputed with medians of the training rows only."""
    train_raw = data.subset(np.flatnonzero(np.isin(data.project, list(train_projects))))
    test_raw = data.subset(np.flatnonzero(data.project == test_project))
    medians = global_medians(train_raw)
    return impute(train_raw, alpha, medians), impute(test_raw, alpha, medians)


def run_experiment(corpus: Corpus, config: ExperimentConfig | None = None,
                   data: Dataset | None = None) -> ExperimentResult:
    """Train/evaluate every non-excluded fold x model x scenario, then pair the scenarios."""
    config = config or ExperimentConfig()
    if data is None:
        data = build_dataset((corpus.projects[p] for p in corpus.project_names), config.features)
    labels = {p: data.y[data.project == p] for p in corpus.project_names}
    folds = make_folds(corpus.project_names, labels)
    scenarios = (WITHOUT_DIFF,) if config.ablate == "diff" else SCENARIOS
    reports: list[FoldReport] = []
    rankings: dict = {}
    models: dict = {}
    for fold in folds:
        if fold.excluded:
            log.info("fold %s excluded: %s", fold.test_project, fold.reason)
            continue
        train, test = split_and_impute(data, fold.train_projects, fold.test_project, config.features.ewma_alpha)
        metric_seeds = {m: derive_seed(config.seed, fold.test_project, "bootstrap", m) for m in METRICS}
        for kind in config.models:
            model_seed = derive_seed(config.seed, fold.test_project, kind)
            for scenario in scenarios:
                names = scenario_features(scenario, config.ablation_drops_cov_diff)
                log.info("fold %s: training %s (%s)", fold.test_project, kind, scenario)
                model = fit_model(kind, train.columns(names), train.y, names, config, model_seed)
                scores = model.predict_proba(test.columns(names))
                predicted, chrono = rank_commits(test, scores, use_signal="cov_diff_signal" in names)
                metrics, n_failing = evaluate_cell(test, scores, predicted, chrono, config.reps,
                                                   config.threshold, metric_seeds)
                reports.append(FoldReport(
                    fold=fold.test_project, model=kind, scenario=scenario, metrics=metrics,
                    importance=feature_importance(model) if kind == "gbdt" else None,
                    n_test_rows=len(test), n_failing_commits=n_failing,
                ))
                rankings[(fold.test_project, kind, scenario)] = predicted
                models[(fold.test_project, kind, scenario)] = model
    stats = paired_stats(reports, config) if len(scenarios) == 2 else []
    return ExperimentResult(folds, reports, stats, rankings, models, config)


def paired_stats(reports: Sequence[FoldReport], config: ExperimentConfig) -> list[PairedComparison]:
    """Per (model, metric): fold-level bootstrap means with vs. without diff features."""
    cells = {(r.fold, r.model, r.scenario): r for r in reports}
    out = []
    for kind in config.models:
        folds = sorted({r.fold for r in reports if r.model == kind})
        for metric in METRICS:
            used, with_v, without_v = [], [], []
            for f in folds:
                a = cells.get((f, kind, WITH_DIFF))
                b = cells.get((f, kind, WITHOUT_DIFF))
                if a is None or b is None or metric not in a.metrics or metric not in b.metrics:
                    continue
                used.append(f)
                with_v.append(a.metrics[metric].mean)
                without_v.append(b.metrics[metric].mean)
            if len(used) < 2:
                continue
            seed = derive_seed(config.seed, kind, metric, "ci")
            out.append(compare(kind, metric, used, with_v, without_v, config.ci_reps, seed))
    return out


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _triplet(m: MetricSample | None, digits: int = 3) -> str:
    if m is None:
        return "n/a"
    if m.name == "speedup":
        return f"({m.q1:.0f}, {m.q2:.0f}, {m.q3:.0f})"
    return f"({m.q1:.{digits}f}, {m.q2:.{digits}f}, {m.q3:.{digits}f})"


def summary_table(result: ExperimentResult) -> str:
    models = list(result.config.models if result.config else ("gbdt", "mlp"))
    cells = {(r.fold, r.model, r.scenario): r for r in result.reports}
    lines = ["# Leave-one-project-out results", "",
             "Bootstrap quartiles (Q1, Q2, Q3) per fold; models as columns.", ""]
    header = "| Metric | Diff features | " + " | ".join(models) + " |"
    rule = "|---|---|" + "---|" * len(models)
    for fold in result.folds:
        if fold.excluded:
            continue
        lines += [f"## {fold.test_project}", "", header, rule]
        for metric in METRICS:
            for scenario, tag in ((WITH_DIFF, "Yes"), (WITHOUT_DIFF, "No")):
                row = [metric, tag]
                any_cell = False
                for kind in models:
                    r = cells.get((fold.test_project, kind, scenario))
                    any_cell |= r is not None
                    row.append(_triplet(r.metrics.get(metric)) if r else "n/a")
                if any_cell:
                    lines.append("| " + " | ".join(row) + " |")
        lines.append("")
    excluded = [f for f in result.folds if f.excluded]
    included = [f for f in result.folds if not f.excluded]
    lines += [f"Evaluated folds: {len(included)}", ""]
    if excluded:
        lines += ["## Excluded folds", ""]
        lines += [f"- {f.test_project}: {f.reason}" for f in excluded]
        lines.append("")
    if result.stats:
        lines += ["## Paired comparison (with vs. without diff features)", "",
                  "| Model | Metric | Cliff's delta | Wilcoxon p (greater) | Mean delta CI |",
                  "|---|---|---|---|---|"]
        for s in result.stats:
            lo, hi = s.mean_delta_ci
            lines.append(f"| {s.model} | {s.metric} | {s.cliffs_delta:.3f} | {s.wilcoxon_p:.4f} | "
                         f"{lo:.3f}-{hi:.3f} |")
        lines.append("")
    return "\n".join(lines)


def emit_reports(result: ExperimentResult, out_dir: str | Path) -> Path:
    """metrics.json, stats.json, feature_importance.csv, summary.md, rankings/, models/."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    _dump(out / "metrics.json", {
        "folds": [asdict(f) for f in result.folds],
        "evaluated_folds": sum(not f.excluded for f in result.folds),
        "cells": [
            {"fold": r.fold, "model": r.model, "scenario": r.scenario,
             "n_test_rows": r.n_test_rows, "n_failing_commits": r.n_failing_commits,
             "metrics": {k: v.to_dict() for k, v in r.metrics.items()}}
            for r in result.reports
        ],
    })
    _dump(out / "stats.json", [s.to_dict() for s in result.stats])
    with (out / "feature_importance.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("fold", "model", "scenario", "rank", "feature", "importance"))
        for r in result.reports:
            for rank, (feat, share) in enumerate(r.importance or (), 1):
                w.writerow((r.fold, r.model, r.scenario, rank, feat, repr(share)))
    (out / "summary.md").write_text(summary_table(result))
    for (fold, kind, scenario), ranks in sorted(result.rankings.items()):
        write_ranking_csv(ranks, out / "rankings" / f"{fold}__{kind}__{scenario}.csv", with_commit=True)
    for (fold, kind, scenario), model in sorted(result.models.items(), key=lambda kv: kv[0]):
        save_model(model, out / "models" / f"{fold}__{kind}__{scenario}.json")
    if cfg is not None:
        _dump(out / "config.json", cfg.to_dict())
    return out
