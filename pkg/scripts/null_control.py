"""Ablation on a corpus with no diff signal: the with/without gap should vanish."""

import argparse
import tempfile
from dataclasses import replace

from commitprio.config import ExperimentConfig, SynthConfig
from commitprio.corpus import load_corpus
from commitprio.experiment import WITH_DIFF, WITHOUT_DIFF, run_experiment
from commitprio.synth import generate_synthetic_corpus


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--tolerance", type=float, default=0.1)
    args = ap.parse_args()

    with tempfile.TemporaryDirectory() as tmp:
        generate_synthetic_corpus(tmp, replace(SynthConfig(), beta1=0.0, seed=args.seed))
        result = run_experiment(load_corpus(tmp), ExperimentConfig(seed=args.seed))
    cells = {(r.fold, r.model, r.scenario): r.metrics["PR-AUC"].q2 for r in result.reports}
    worst = 0.0
    for fold, model, scenario in sorted(cells):
        if scenario != WITH_DIFF:
            continue
        gap = cells[(fold, model, WITH_DIFF)] - cells[(fold, model, WITHOUT_DIFF)]
        worst = max(worst, abs(gap))
        print(f"{fold:10s} {model:5s} PR-AUC median with={cells[(fold, model, WITH_DIFF)]:.3f} "
              f"without={cells[(fold, model, WITHOUT_DIFF)]:.3f} gap={gap:+.3f}")
    verdict = "ok" if worst < args.tolerance else "GAP TOO LARGE"
    print(f"max |gap| {worst:.3f} (tolerance {args.tolerance}): {verdict}")
    raise SystemExit(0 if worst < args.tolerance else 1)


if __name__ == "__main__":
    main()
