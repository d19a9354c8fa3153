"""Contraction factors and RIC thresholds over a small (d, r1, kappa1) grid.

The RIC column is a hypothesis supplied on the command line, not a measurement.
"""

import argparse
import itertools

from tucker_recover.solvers import ConvergenceConstants, gamma_constants


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--ric", type=float, default=0.01)
    args = parser.parse_args()
    print("d,r1,kappa1,ric,gamma1,gamma2,threshold1,threshold2")
    for d, r1, kappa in itertools.product((3, 4), (1, 2, 5), (1.0, 2.0)):
        g = gamma_constants(ConvergenceConstants(d, r1, kappa, args.ric))
        print(d, r1, kappa, args.ric, *(f"{v:.6g}" for v in g[:4]), sep=",")


if __name__ == "__main__":
    main()
