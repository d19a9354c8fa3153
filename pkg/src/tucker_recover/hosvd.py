"""Quasi-projections onto tensors of bounded multilinear rank."""

from dataclasses import dataclass

import numpy as np

from .linalg import TruncatedSVD, singular_values, svd_truncated
from .tensor_core import matricize, mode_product, tensorize


@dataclass(eq=False)
class TuckerFactorization:
    """``core x_1 U_1 x_2 ... x_d U_d`` with orthonormal factor columns."""

    core: np.ndarray
    factors: list

    def __post_init__(self):
        self.factors = list(self.factors)
        self._dense = None

    @property
    def ranks(self):
        return tuple(self.core.shape)

    @property
    def dims(self):
        return tuple(u.shape[0] for u in self.factors)

    def compose(self, flops=None):
        if self._dense is not None and flops is None:
            return self._dense
        out = self.core
        for mode, u in enumerate(self.factors):
            out = mode_product(out, mode, u, flops=flops)
        self._dense = out
        return out

    def permute(self, axes):
        """Reorder modes: mode i of the result is mode ``axes[i]`` of ``self``."""
        return TuckerFactorization(
            np.transpose(self.core, axes), [self.factors[a] for a in axes]
        )


@dataclass(eq=False)
class ModeOneBasis:
    """Leading singular bases of a mode-1 unfolding (defines the tangent space)."""

    u: np.ndarray
    v: np.ndarray

    @property
    def rank(self):
        return self.u.shape[1]


def _check_ranks(dims, r):
    r = tuple(int(x) for x in r)
    if len(r) != len(dims):
        raise ValueError(f"rank {r} has wrong length for dims {dims}")
    for n, k in zip(dims, r):
        if not 0 <= k <= n:
            raise ValueError(f"rank {r} exceeds dims {tuple(dims)}")
    return r


def _leading(m, k, flops=None):
    """Rank-``k`` truncated SVD allowing ``k`` above the column count.

    Extra left vectors complete the basis; their singular values are zero.
    """
    if k <= min(m.shape):
        return svd_truncated(m, k, flops=flops)
    svd = svd_truncated(m, min(m.shape), flops=flops)
    u_full = np.linalg.qr(np.hstack([svd.u, np.eye(m.shape[0])]))[0]
    u = np.hstack([svd.u, u_full[:, svd.u.shape[1]:k]])
    pad = k - svd.s.size
    return TruncatedSVD(u, np.concatenate([svd.s, np.zeros(pad)]), np.hstack([svd.v, np.zeros((m.shape[1], pad))]))


def t_hosvd(z, r, flops=None):
    """Truncated HOSVD: every factor from the unfolding of the original ``z``."""
    z = np.asarray(z, dtype=np.float64)
    r = _check_ranks(z.shape, r)
    factors = [_leading(matricize(z, i), r[i], flops=flops).u for i in range(z.ndim)]
    core = z
    for i, u in enumerate(factors):
        core = mode_product(core, i, u.T, flops=flops)
    return TuckerFactorization(core, factors)


def default_order(r):
    """Modes by ascending rank, ties by ascending mode index (0-based)."""
    return tuple(sorted(range(len(r)), key=lambda i: (r[i], i)))


def _validate_order(order, d):
    order = tuple(int(i) for i in order)
    if sorted(order) != list(range(d)):
        raise ValueError(f"{order} is not a permutation of the {d} modes")
    return order


def st_hosvd_steps(b, r, modes, flops=None):
    """Sequentially truncate ``b`` along ``modes``; returns (shrunk b, {mode: U})."""
    factors = {}
    for mode in modes:
        unfolded = matricize(b, mode)
        svd = _leading(unfolded, r[mode], flops=flops)
        factors[mode] = svd.u
        dims = b.shape[:mode] + (r[mode],) + b.shape[mode + 1:]
        b = tensorize(svd.s[:, None] * svd.v.T, dims, mode)
    return b, factors


def st_hosvd(z, r, order=None, flops=None):
    """Sequentially truncated HOSVD processing modes in ``order`` (default ascending rank)."""
    z = np.asarray(z, dtype=np.float64)
    r = _check_ranks(z.shape, r)
    order = default_order(r) if order is None else _validate_order(order, z.ndim)
    core, factors = st_hosvd_steps(z, r, order, flops=flops)
    return TuckerFactorization(core, [factors[i] for i in range(z.ndim)])


def h_mode1(z, r1):
    """Best approximation with mode-1 rank ``r1`` and the bases of that truncation."""
    z = np.asarray(z, dtype=np.float64)
    if not 0 <= r1 <= z.shape[0]:
        raise ValueError(f"r1={r1} exceeds n1={z.shape[0]}")
    svd = svd_truncated(matricize(z, 0), r1)
    return tensorize(svd.matrix(), z.shape, 0), ModeOneBasis(svd.u, svd.v)


def tail_energies(z, r):
    """Per-mode norm of the singular values discarded by a rank-``r`` truncation."""
    z = np.asarray(z, dtype=np.float64)
    r = _check_ranks(z.shape, r)
    out = []
    for i in range(z.ndim):
        s = singular_values(matricize(z, i))
        out.append(float(np.sqrt(np.sum(s[r[i]:] ** 2))))
    return out
