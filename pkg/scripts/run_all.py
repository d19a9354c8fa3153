"""Run every experiment config under configs/ and report where the CSVs went.

    python3 scripts/run_all.py [--out results] [--seed N] [--jobs K]
"""

import argparse
from pathlib import Path

from tucker_recover.harness import load_config, run_experiment

ROOT = Path(__file__).resolve().parent.parent


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default=str(ROOT / "results"))
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("kinds", nargs="*", help="subset of config names, e.g. phase noise")
    args = parser.parse_args()
    for cfg in sorted((ROOT / "configs").glob("*.cfg")):
        if args.kinds and cfg.stem not in args.kinds:
            continue
        spec = load_config(cfg, seed=args.seed, jobs=args.jobs, out=str(Path(args.out) / cfg.stem))
        result = run_experiment(spec)
        print(f"{cfg.stem:>9}: {len(result.rows)} rows, {result.diverged} diverged -> {result.csv_path}")


if __name__ == "__main__":
    main()
