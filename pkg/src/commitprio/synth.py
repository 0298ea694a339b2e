"""Seeded synthetic multi-project corpus with diff-driven failures.

Every regular project gets production classes, one test suite per target
class (plus a few helper classes it also exercises), and a commit history in
which each commit edits a handful of classes drawn with a skewed "hotness". A
suite fails at a commit with probability

    sigmoid(beta0 + fragility_s + beta1 * cov_diff_signal + beta2 * (1 - weighted_pass_rate) + noise)

where both signals are computed from the suite's *true* coverage and history.
Some suites hide part of that truth from the pipeline: ``unmapped_suites``
have names no class matches and no coverage rows, ``uncovered_suites`` are
name-mappable but lack coverage rows.

The recorded execution order differs by project (``chrono_bias``): some
schedule suites touching the changed code first, as an incremental build
would, others schedule them last.

The last project is degenerate: every suite fails at every commit, which is
what the fold-exclusion rule exists for.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .config import FeatureConfig, SynthConfig
from .corpus import ChangeKind, FileDiff, format_unified_diff
from .features import PastRun, weighted_pass_rate

PROJECT_NAMES = ("Atlas", "Borealis", "Cypress", "Dune", "Ember", "Fjord", "Glacier", "Harbor")
_WORDS = ("Token", "Parser", "Stream", "Buffer", "Matrix", "Vector", "Date", "Zone", "Node", "Tree",
          "Cache", "Codec", "Field", "Graph", "Lexer", "Format", "Number", "Range", "Query", "Schema",
          "Socket", "Filter", "Reader", "Writer", "Builder", "Mapper", "Solver", "Parser", "Table", "Index")
_UNMAPPED_NAMES = ("SerializationSmokeTest", "EndToEndRegressionTest", "ApiCompatibilityTest",
                   "NightlyStressTest", "LicenseHeaderTest")
_EXTRA_CLASSES = 10
BASE_TIMESTAMP = 1_600_000_000


@dataclass
class SuiteTruth:
    class_path: str
    covered: frozenset[str]
    fragility: float
    visible_coverage: bool


@dataclass
class ProjectTruth:
    name: str
    package: str
    classes: list[str]
    suites: list[SuiteTruth]
    chrono_bias: float
    degenerate: bool = False
    # (commit_id, suite) -> generating failure probability
    p_fail: dict[tuple[str, str], float] = field(default_factory=dict)


def _sigmoid(z: float) -> float:
    return float(1.0 / (1.0 + np.exp(-z)))


def _class_names(rng: np.random.Generator, n: int) -> list[str]:
    words = sorted(set(_WORDS))
    names: list[str] = []
    seen: set[str] = set()
    while len(names) < n:
        a, b = rng.choice(len(words), size=2, replace=False)
        name = words[a] + words[b]
        if name not in seen:
            seen.add(name)
            names.append(name)
    return names


def _class_path(package: str, cls: str) -> str:
    return f"src/main/java/{package.replace('.', '/')}/{cls}.java"


def _make_project(name: str, cfg: SynthConfig, rng: np.random.Generator, chrono_bias: float,
                  degenerate: bool) -> ProjectTruth:
    package = f"org.synth.{name.lower()}"
    n_suites = cfg.degenerate_suites if degenerate else cfg.suites
    n_mapped = n_suites - (0 if degenerate else cfg.unmapped_suites)
    simple = _class_names(rng, n_mapped + _EXTRA_CLASSES)
    classes = [f"{package}.{c}" for c in simple]
    suites: list[SuiteTruth] = []
    cover_count: dict[str, int] = {}
    uncovered = set(rng.choice(n_mapped, size=0 if degenerate else min(cfg.uncovered_suites, n_mapped), replace=False).tolist())
    for i in range(n_suites):
        if i < n_mapped:
            target = classes[i]
            suite_path = f"{package}.{simple[i]}Test"
        else:
            target = classes[int(rng.integers(len(classes)))]
            suite_path = f"{package}.{_UNMAPPED_NAMES[(i - n_mapped) % len(_UNMAPPED_NAMES)]}"
        visible = i < n_mapped and i not in uncovered
        # hidden coverage is irreducible error for any learner; keep it small
        n_help = min(cfg.helpers_per_suite, len(classes) - 1) if visible else min(cfg.helpers_per_suite, 1)
        # least-covered classes first (random tie-break), so every class ends up
        # exercised by roughly the same number of suites
        load = np.array([cover_count.get(c, 0) for c in classes], dtype=float)
        load[classes.index(target)] = np.inf
        helpers = np.lexsort((rng.random(len(classes)), load))[:n_help]
        covered = frozenset([target, *(classes[h] for h in helpers)])
        for c in covered:
            cover_count[c] = cover_count.get(c, 0) + 1
        suites.append(SuiteTruth(suite_path, covered, float(rng.normal(0.0, cfg.fragility)), visible))
    return ProjectTruth(name, package, classes, suites, chrono_bias, degenerate)


def _commit_diffs(truth: ProjectTruth, hot: np.ndarray, rng: np.random.Generator,
                  extra_files_rate: float) -> list[FileDiff]:
    n_files = 1 + int(rng.poisson(extra_files_rate))
    picks = rng.choice(len(truth.classes), size=min(n_files, len(truth.classes)), replace=False, p=hot)
    diffs = []
    for c in sorted(picks.tolist()):
        cls = truth.classes[c]
        added = int(rng.integers(1, 60))
        removed = int(rng.integers(0, 40))
        path = _class_path(truth.package, cls.rsplit(".", 1)[-1])
        diffs.append(FileDiff(path, added, removed, ChangeKind.MODIFIED))
    if rng.random() < 0.2:
        diffs.append(FileDiff("README.md", int(rng.integers(1, 10)), int(rng.integers(0, 5)), ChangeKind.MODIFIED))
    return diffs


def _true_signal(covered: frozenset[str], diffs: list[FileDiff], package: str) -> float:
    total = sum(d.churn for d in diffs)
    if total == 0:
        return 0.0
    prefix = "src/main/java/"
    hit = 0
    for d in diffs:
        if d.path.startswith(prefix) and d.path.endswith(".java"):
            cls = d.path[len(prefix):-len(".java")].replace("/", ".")
            if cls in covered:
                hit += d.churn
    return hit / total


def generate_synthetic_corpus(out_dir: str | Path, cfg: SynthConfig | None = None,
                              features: FeatureConfig | None = None) -> dict[str, ProjectTruth]:
    """Write a corpus under ``out_dir`` (one directory per project) and return the ground truth.

    Also writes ``truth.csv`` per project (commit_id, suite, p_fail) and a
    top-level ``synth.json`` recording the generator configuration.
    """
    cfg = cfg or SynthConfig()
    features = features or FeatureConfig()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    n_regular = cfg.projects - 1
    biases = np.linspace(-1.0, 1.0, n_regular) if n_regular > 1 else np.zeros(max(n_regular, 0))
    biases = rng.permutation(biases)
    names = [PROJECT_NAMES[i] if i < len(PROJECT_NAMES) else f"Project{i}" for i in range(cfg.projects)]
    truths: dict[str, ProjectTruth] = {}
    for p, name in enumerate(names):
        degenerate = p == cfg.projects - 1
        prng = np.random.default_rng([cfg.seed, p])
        bias = 0.0 if degenerate else float(biases[p])
        truth = _make_project(name, cfg, prng, bias, degenerate)
        _write_project(out_dir / name, truth, cfg, features, prng)
        truths[name] = truth
    (out_dir / "synth.json").write_text(json.dumps(asdict(cfg), indent=2, sort_keys=True) + "\n")
    return truths


def _run_order(signals: np.ndarray, static: np.ndarray, bias: float, rng: np.random.Generator) -> dict[int, int]:
    """Execution position per suite index for one commit.

    ``bias`` > 0 runs suites exercising the changed code early (an incremental
    build scheduling affected modules first), ``bias`` < 0 runs them late.
    """
    key = -bias * (signals + 0.1 * static) + (1.0 - abs(bias)) * rng.normal(size=len(signals))
    run_order = np.argsort(key, kind="stable")
    return {int(s): k for k, s in enumerate(run_order)}


def _write_project(pdir: Path, truth: ProjectTruth, cfg: SynthConfig, features: FeatureConfig,
                   rng: np.random.Generator) -> None:
    (pdir / "diffs").mkdir(parents=True, exist_ok=True)
    n_classes = len(truth.classes)
    hot = (np.arange(1, n_classes + 1, dtype=float)) ** (-cfg.hot_skew)
    hot = rng.permutation(hot / hot.sum())

    # static tie-breaker for the execution order
    exposure = np.array([sum(hot[truth.classes.index(c)] for c in s.covered) for s in truth.suites])
    static = np.array([s.fragility for s in truth.suites]) + np.log(exposure)
    static = (static - static.mean()) / (static.std() or 1.0)

    n_commits = cfg.degenerate_commits if truth.degenerate else cfg.commits
    history: dict[str, list[PastRun]] = {s.class_path: [] for s in truth.suites}
    commit_rows, exec_rows, truth_rows = [], [], []
    for seq in range(n_commits):
        commit_id = f"c{seq}"
        diffs = _commit_diffs(truth, hot, rng, cfg.extra_files_rate)
        churn = sum(d.churn for d in diffs)
        diff_file = f"diffs/{commit_id}.diff"
        (pdir / diff_file).write_text(format_unified_diff(diffs))
        commit_rows.append({"commit_id": commit_id, "timestamp": BASE_TIMESTAMP + 3600 * seq,
                            "sequence_index": seq, "diff_file": diff_file})
        signals = np.array([_true_signal(s.covered, diffs, truth.package) for s in truth.suites])
        order_index = _run_order(signals, static, truth.chrono_bias, rng)
        outcomes = []
        for i, s in enumerate(truth.suites):
            wpr = weighted_pass_rate(history[s.class_path], seq, churn, features.decay, features.window)
            wpr = 1.0 if wpr is None else wpr
            logit = (cfg.beta0 + s.fragility + cfg.beta1 * signals[i] + cfg.beta2 * (1.0 - wpr)
                     + cfg.noise * float(rng.normal()))
            p = 1.0 if truth.degenerate else _sigmoid(logit)
            failed = bool(rng.random() < p)
            truth.p_fail[(commit_id, s.class_path)] = p
            outcomes.append((i, s, failed, p))
        for i, s, failed, p in outcomes:
            history[s.class_path].append(PastRun(seq, not failed, churn))
            exec_rows.append((commit_id, s.class_path, "fail" if failed else "pass", order_index[i]))
            truth_rows.append((commit_id, s.class_path, repr(p)))

    with (pdir / "commits.jsonl").open("w") as fh:
        for row in commit_rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    _write_csv(pdir / "executions.csv", ("commit_id", "suite", "verdict", "order_index"), exec_rows)
    cov_rows = [(s.class_path, c) for s in truth.suites if s.visible_coverage for c in sorted(s.covered)]
    _write_csv(pdir / "coverage.csv", ("suite", "class_path"), cov_rows)
    _write_csv(pdir / "truth.csv", ("commit_id", "suite", "p_fail"), truth_rows)


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
