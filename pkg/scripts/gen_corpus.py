"""Write a seeded synthetic corpus.

    python3 scripts/gen_corpus.py OUT_DIR [--seed N] [--projects N] [--commits N] [--suites N] [--beta1 X]
"""

import argparse
from dataclasses import replace

from commitprio.config import SynthConfig
from commitprio.synth import generate_synthetic_corpus


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("out")
    defaults = SynthConfig()
    for name in ("seed", "projects", "commits", "suites"):
        ap.add_argument(f"--{name}", type=int, default=getattr(defaults, name))
    ap.add_argument("--beta1", type=float, default=defaults.beta1, help="strength of the diff signal")
    args = ap.parse_args()
    cfg = replace(defaults, seed=args.seed, projects=args.projects, commits=args.commits,
                  suites=args.suites, beta1=args.beta1)
    generate_synthetic_corpus(args.out, cfg)
    print(f"wrote {cfg.projects} projects to {args.out}")


if __name__ == "__main__":
    main()
