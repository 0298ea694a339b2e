"""Full ablation study on the default synthetic corpus (or one given with --corpus).

Prints the per-fold summary table and the paired statistics, and writes the
usual report files under --out.
"""

import argparse
import tempfile
import time

from commitprio.config import ExperimentConfig
from commitprio.corpus import load_corpus
from commitprio.experiment import emit_reports, run_experiment, summary_table
from commitprio.synth import generate_synthetic_corpus


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--corpus")
    ap.add_argument("--out", default="runs/ablation")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--reps", type=int, default=ExperimentConfig.reps)
    args = ap.parse_args()

    start = time.perf_counter()
    config = ExperimentConfig(seed=args.seed, reps=args.reps, out=args.out)
    with tempfile.TemporaryDirectory() as tmp:
        root = args.corpus
        if root is None:
            root = tmp
            generate_synthetic_corpus(root, config.synth)
        result = run_experiment(load_corpus(root), config)
    emit_reports(result, args.out)
    print(summary_table(result))
    print()
    for s in result.stats:
        print(f"{s.model:5s} {s.metric:10s} cliff={s.cliffs_delta:+.3f} p={s.wilcoxon_p:.4f}")
    print(f"\n{time.perf_counter() - start:.1f}s, reports in {args.out}")


if __name__ == "__main__":
    main()
