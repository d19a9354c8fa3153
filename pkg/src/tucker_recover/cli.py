"""``tucker-recover <kind> --config FILE [--seed N] [--out DIR]``.

Exit status: 0 on success, 1 on a config error, 2 when any run diverged.
"""

import argparse
import sys

from .harness import KINDS, ConfigError, load_config, run_experiment


def build_parser():
    parser = argparse.ArgumentParser(prog="tucker-recover", description=__doc__.splitlines()[0])
    parser.add_argument("kind", choices=KINDS)
    parser.add_argument("--config", required=True, help="flat key = value experiment file")
    parser.add_argument("--seed", type=int, default=None, help="override the master seed")
    parser.add_argument("--out", default=None, help="output directory (default from config)")
    parser.add_argument("--jobs", type=int, default=None, help="worker processes for trials")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        spec = load_config(args.config, kind=args.kind, seed=args.seed, out=args.out, jobs=args.jobs)
    except ConfigError as exc:
        print(f"tucker-recover: {exc}", file=sys.stderr)
        return 1
    result = run_experiment(spec)
    for path in result.paths:
        print(path)
    if result.diverged:
        print(f"tucker-recover: {result.diverged} run(s) diverged", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
