"""Command-line entry point.

    commitprio synthgen   --out DIR [--seed N]
    commitprio ingest     --corpus DIR [--out DIR]
    commitprio features   --corpus DIR --out DIR
    commitprio train      --corpus DIR --out DIR [--project HELD_OUT] [--model gbdt|mlp|both] [--ablate diff]
    commitprio prioritize --corpus DIR --commit ID [--project P] [--model ...] [--model-file F] --out DIR
    commitprio evaluate   --corpus DIR --project P [--model ...] [--ablate diff] [--reps N] [--threshold T]
    commitprio experiment [--corpus DIR] [--config F] [--seed N] [--model ...] [--ablate diff] --out DIR

Exit status: 0 success, 1 input or validation error, 2 internal error.
Diagnostics go to stderr; results go to files under ``--out`` (and a short
summary to stdout).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import traceback
from dataclasses import replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import ExperimentConfig, load_config
from .corpus import Corpus, load_corpus, mapping_rate
from .errors import InputError
from .experiment import (METRICS, WITH_DIFF, WITHOUT_DIFF, derive_seed, emit_reports, evaluate_cell,
                         fit_model, rank_commits, run_experiment, scenario_features, split_and_impute,
                         summary_table)
from .features import build_dataset, global_medians, impute, write_dataset_csv
from .learners import feature_importance, load_model, save_model
from .ranking import write_ranking_csv
from .synth import generate_synthetic_corpus

log = logging.getLogger("commitprio")

COMMANDS = ("ingest", "features", "train", "prioritize", "evaluate", "experiment", "synthgen")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise InputError(f"usage: {message}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--model", choices=("gbdt", "mlp", "both"), help="learner(s) to use")
    p.add_argument("--ablate", choices=("diff",), help="drop the diff features (without_diff only)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--reps", type=int, help="bootstrap replicates")
    p.add_argument("--threshold", type=float, help="classification threshold")
    p.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="commitprio", description="Diff-aware test suite prioritisation.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("synthgen", help="write a seeded synthetic corpus")
    _common(p)

    p = sub.add_parser("ingest", help="load and validate a corpus, print a summary")
    _common(p)
    p.add_argument("--corpus", help="corpus root (one directory per project)")

    p = sub.add_parser("features", help="write the imputed feature table")
    _common(p)
    p.add_argument("--corpus")

    p = sub.add_parser("train", help="train and save models")
    _common(p)
    p.add_argument("--corpus")
    p.add_argument("--project", help="hold this project out of training")

    p = sub.add_parser("prioritize", help="rank the suites of one commit")
    _common(p)
    p.add_argument("--corpus")
    p.add_argument("--commit", required=True)
    p.add_argument("--project", help="project of the commit (default: first project that has it)")
    p.add_argument("--model-file", help="saved model to use instead of training one")

    p = sub.add_parser("evaluate", help="metrics for one test project")
    _common(p)
    p.add_argument("--corpus")
    p.add_argument("--project", required=True)
    p.add_argument("--model-file", help="saved model to use instead of training one")

    p = sub.add_parser("experiment", help="full leave-one-project-out ablation study")
    _common(p)
    p.add_argument("--corpus", help="default: synthesise one under OUT/corpus")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.model is not None:
        changes["models"] = ("gbdt", "mlp") if args.model == "both" else (args.model,)
    if args.ablate is not None:
        changes["ablate"] = args.ablate
    if args.out is not None:
        changes["out"] = args.out
    if args.reps is not None:
        if args.reps < 1:
            raise InputError("--reps must be >= 1")
        changes["reps"] = args.reps
    if args.threshold is not None:
        if not 0.0 <= args.threshold <= 1.0:
            raise InputError("--threshold must be in [0, 1]")
        changes["threshold"] = args.threshold
    if getattr(args, "corpus", None) is not None:
        changes["corpus"] = args.corpus
    return replace(cfg, **changes)


def _corpus(cfg: ExperimentConfig) -> Corpus:
    if cfg.corpus is None:
        raise InputError("no corpus given (--corpus or the config's 'corpus' key)")
    return load_corpus(cfg.corpus)


def _scenarios(cfg: ExperimentConfig, default: Sequence[str]) -> tuple[str, ...]:
    return (WITHOUT_DIFF,) if cfg.ablate == "diff" else tuple(default)


def _dump(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synthgen(args, cfg: ExperimentConfig) -> int:
    synth = cfg.synth if args.seed is None else replace(cfg.synth, seed=args.seed)
    out = Path(cfg.out)
    generate_synthetic_corpus(out, synth, cfg.features)
    print(out)
    return 0


def cmd_ingest(args, cfg: ExperimentConfig) -> int:
    corpus = _corpus(cfg)
    summary = {}
    for name in corpus.project_names:
        p = corpus.projects[name]
        summary[name] = {
            "commits": len(p.commits),
            "suites": len(p.suites),
            "executions": len(p.executions),
            "failure_rate": float(np.mean([e.failed for e in p.executions])) if p.executions else 0.0,
            "production_classes": len(p.production_classes),
            "suites_with_coverage": len(p.coverage),
            "mapping_rate": mapping_rate(p.mapping),
        }
    if args.out:
        _dump(Path(args.out) / "ingest.json", summary)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def cmd_features(args, cfg: ExperimentConfig) -> int:
    corpus = _corpus(cfg)
    data = build_dataset((corpus.projects[p] for p in corpus.project_names), cfg.features)
    # whole-corpus medians: fine for inspection, experiments impute per fold
    data = impute(data, cfg.features.ewma_alpha, global_medians(data))
    path = Path(cfg.out) / "features.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_dataset_csv(data, path)
    print(path)
    return 0


def _train_models(cfg: ExperimentConfig, corpus: Corpus, test_project: str | None, scenario: str):
    """Fit every configured learner on all projects except ``test_project``."""
    data = build_dataset((corpus.projects[p] for p in corpus.project_names), cfg.features)
    names = corpus.project_names
    if test_project is not None and test_project not in names:
        raise InputError(f"unknown project {test_project!r}; corpus has {names}")
    train_projects = [p for p in names if p != test_project]
    if not train_projects:
        raise InputError("no training projects left")
    anchor = test_project or "all"
    if test_project is None:
        train, test = impute(data, cfg.features.ewma_alpha, global_medians(data)), None
    else:
        train, test = split_and_impute(data, train_projects, test_project, cfg.features.ewma_alpha)
    feats = scenario_features(scenario, cfg.ablation_drops_cov_diff)
    models = {}
    for kind in cfg.models:
        seed = derive_seed(cfg.seed, anchor, kind)
        log.info("training %s on %s (%s)", kind, train_projects, scenario)
        models[kind] = fit_model(kind, train.columns(feats), train.y, feats, cfg, seed)
    return models, test


def cmd_train(args, cfg: ExperimentConfig) -> int:
    corpus = _corpus(cfg)
    scenario = WITHOUT_DIFF if cfg.ablate == "diff" else WITH_DIFF
    models, _ = _train_models(cfg, corpus, args.project, scenario)
    out = Path(cfg.out)
    for kind, model in models.items():
        path = out / "models" / f"{kind}.json"
        save_model(model, path)
        print(path)
        if kind == "gbdt":
            rows = [{"rank": i, "feature": f, "importance": v}
                    for i, (f, v) in enumerate(feature_importance(model), 1)]
            _dump(out / "feature_importance.json", rows)
    return 0


def _project_of(corpus: Corpus, commit_id: str, project: str | None) -> str:
    if project is not None:
        if project not in corpus.projects:
            raise InputError(f"unknown project {project!r}")
        if not any(c.commit_id == commit_id for c in corpus.projects[project].commits):
            raise InputError(f"commit {commit_id!r} not found in project {project!r}")
        return project
    hits = [p for p in corpus.project_names if any(c.commit_id == commit_id for c in corpus.projects[p].commits)]
    if not hits:
        raise InputError(f"commit {commit_id!r} not found in any project")
    if len(hits) > 1:
        log.warning("commit %s exists in %s; using %s (pass --project to choose)", commit_id, hits, hits[0])
    return hits[0]


def _loaded_or_trained(args, cfg: ExperimentConfig, corpus: Corpus, project: str, scenario: str):
    if args.model_file:
        path = Path(args.model_file)
        if not path.is_file():
            raise InputError(f"missing file: {path}")
        model = load_model(path)
        data = build_dataset((corpus.projects[p] for p in corpus.project_names), cfg.features)
        others = [p for p in corpus.project_names if p != project] or [project]
        _, test = split_and_impute(data, others, project, cfg.features.ewma_alpha)
        kind = "gbdt" if hasattr(model, "trees") else "mlp"
        return {kind: model}, test
    return _train_models(cfg, corpus, project, scenario)


def cmd_prioritize(args, cfg: ExperimentConfig) -> int:
    corpus = _corpus(cfg)
    project = _project_of(corpus, args.commit, args.project)
    scenario = WITHOUT_DIFF if cfg.ablate == "diff" else WITH_DIFF
    models, test = _loaded_or_trained(args, cfg, corpus, project, scenario)
    rows = np.flatnonzero(test.commit_id == args.commit)
    if rows.size == 0:
        raise InputError(f"commit {args.commit!r} has no execution records to rank")
    commit = test.subset(rows)
    rankings = []
    for kind, model in models.items():
        feats = tuple(model.feature_names)
        scores = model.predict_proba(commit.columns(feats))
        predicted, _ = rank_commits(commit, scores, use_signal="cov_diff_signal" in feats)
        rankings.append(replace(predicted[0], strategy=kind))
    path = Path(cfg.out) / "ranking.csv"
    write_ranking_csv(rankings, path)
    print(path)
    return 0


def cmd_evaluate(args, cfg: ExperimentConfig) -> int:
    corpus = _corpus(cfg)
    if args.project not in corpus.projects:
        raise InputError(f"unknown project {args.project!r}")
    cells = []
    scenarios = _scenarios(cfg, (WITH_DIFF, WITHOUT_DIFF)) if not args.model_file else (None,)
    seeds = {m: derive_seed(cfg.seed, args.project, "bootstrap", m) for m in METRICS}
    for scenario in scenarios:
        models, test = _loaded_or_trained(args, cfg, corpus, args.project, scenario or WITH_DIFF)
        if test.y.min() == test.y.max():
            raise InputError(f"project {args.project!r} has single-class labels; metrics undefined")
        for kind, model in models.items():
            feats = tuple(model.feature_names)
            scores = model.predict_proba(test.columns(feats))
            predicted, chrono = rank_commits(test, scores, use_signal="cov_diff_signal" in feats)
            metrics, n_fail = evaluate_cell(test, scores, predicted, chrono, cfg.reps, cfg.threshold, seeds)
            label = scenario or ("with_diff" if "cov_diff_signal" in feats else "custom")
            cells.append({"project": args.project, "model": kind, "scenario": label,
                          "n_failing_commits": n_fail,
                          "metrics": {k: v.to_dict() for k, v in metrics.items()}})
            for name, m in metrics.items():
                print(f"{args.project}\t{kind}\t{label}\t{name}\t({m.q1:.4f}, {m.q2:.4f}, {m.q3:.4f})")
    _dump(Path(cfg.out) / "metrics.json", cells)
    return 0


def cmd_experiment(args, cfg: ExperimentConfig) -> int:
    out = Path(cfg.out)
    if cfg.corpus is None:
        corpus_dir = out / "corpus"
        log.info("no corpus given; synthesising one under %s", corpus_dir)
        generate_synthetic_corpus(corpus_dir, cfg.synth, cfg.features)
        cfg = replace(cfg, corpus=str(corpus_dir))
    result = run_experiment(load_corpus(cfg.corpus), cfg)
    emit_reports(result, out)
    print(summary_table(result))
    return 0


HANDLERS = {
    "synthgen": cmd_synthgen, "ingest": cmd_ingest, "features": cmd_features, "train": cmd_train,
    "prioritize": cmd_prioritize, "evaluate": cmd_evaluate, "experiment": cmd_experiment,
}


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
        cfg = resolve_config(args)
        return HANDLERS[args.command](args, cfg)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc.filename}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc(file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
