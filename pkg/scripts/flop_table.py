"""Leading-order multiply-adds per iteration, in units of n^d r, for the fused
thresholding, the step-size normalization, and the dense ST-HOSVD reference.

    python3 scripts/flop_table.py 20 30 40 --rank 5
"""

import argparse

import numpy as np

from tucker_recover.hosvd import h_mode1, st_hosvd
from tucker_recover.linalg import FlopCount
from tucker_recover.tangent import fused_retract, project_dense


def row(n, r, seed=0):
    rng = np.random.default_rng(seed)
    _, basis = h_mode1(rng.standard_normal((n, n, n)), r)
    z = rng.standard_normal((n, n, n))
    _, _, fused = fused_retract(z, basis, (r, r, r))
    step = FlopCount(threshold=2 * r)
    w = project_dense(z, basis, flops=step)
    dense = FlopCount(threshold=2 * r)
    st_hosvd(w, (r, r, r), flops=dense).compose(flops=dense)
    unit = n ** 3 * r
    return fused.leading / unit, fused.total / unit, step.leading / unit, dense.total / unit


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("sizes", nargs="*", type=int, default=[20, 30, 40])
    parser.add_argument("--rank", type=int, default=5)
    args = parser.parse_args()
    print("n,fused_leading,fused_total,step_leading,dense_sthosvd_total")
    for n in args.sizes:
        print(n, *(f"{v:.3f}" for v in row(n, args.rank)), sep=",")


if __name__ == "__main__":
    main()
