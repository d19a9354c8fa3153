"""Thin QR, truncated SVD and multiply-add accounting.

Both factorizations sit on LAPACK through numpy (Householder QR, and
bidiagonalization followed by divide-and-conquer for the SVD) and then fix
signs so repeated runs and golden tests see identical factors.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

# relative cutoff below which singular values count as zero in rank detection
RANK_RTOL = 1e-13


class ThinQR(NamedTuple):
    q: np.ndarray
    r: np.ndarray


class TruncatedSVD(NamedTuple):
    u: np.ndarray
    s: np.ndarray
    v: np.ndarray

    def matrix(self):
        return (self.u * self.s) @ self.v.T


@dataclass
class FlopCount:
    """Multiply-add tally for matrix-matrix products and factorizations.

    A product of a (p x q) and a (q x s) matrix costs ``p*q*s`` multiply-adds.
    It is *leading-order* when at least two of p, q, s exceed ``threshold``
    (the tangent rank 2*r1 in the fused retraction); everything else is a
    lower-order term. Factorizations are charged separately by the Householder
    cost model in :meth:`qr` and :meth:`svd`.
    """

    threshold: int = 0
    leading: int = 0
    products: int = 0
    factorizations: int = 0
    log: list = field(default_factory=list, repr=False)

    def matmul(self, p, q, s, label=""):
        cost = int(p) * int(q) * int(s)
        self.products += cost
        is_leading = sum(int(x) > self.threshold for x in (p, q, s)) >= 2
        if is_leading:
            self.leading += cost
        self.log.append((label, int(p), int(q), int(s), is_leading))
        return cost

    def dot(self, a, b, label=""):
        self.matmul(a.shape[0], a.shape[1], b.shape[1], label)
        return a @ b

    def qr(self, rows, cols):
        # Householder thin QR: 2 m k^2 - 2/3 k^3 flops, half as multiply-adds
        m, k = max(rows, cols), min(rows, cols)
        self.factorizations += int(m * k * k - k ** 3 / 3)

    def svd(self, rows, cols):
        # Golub-Kahan bidiagonalization dominates: 4 m k^2 - 4/3 k^3 flops
        m, k = max(rows, cols), min(rows, cols)
        self.factorizations += int(2 * m * k * k - 2 * k ** 3 / 3)

    @property
    def total(self):
        return self.products + self.factorizations

    def merge(self, other):
        self.leading += other.leading
        self.products += other.products
        self.factorizations += other.factorizations
        self.log.extend(other.log)
        return self


def qr_thin(a, flops=None):
    """Thin QR with nonnegative diagonal in R (columns of Q flipped to match)."""
    a = np.asarray(a, dtype=np.float64)
    n, k = a.shape
    if n < k:
        raise ValueError(f"qr_thin needs rows >= cols, got {a.shape}")
    q, r = np.linalg.qr(a, mode="reduced")
    signs = np.where(np.diag(r) < 0, -1.0, 1.0)
    if flops is not None:
        flops.qr(n, k)
    return ThinQR(q * signs, r * signs[:, None])


def _fix_signs(u, v):
    # largest-magnitude entry of each left singular vector made nonnegative
    idx = np.argmax(np.abs(u), axis=0)
    signs = np.where(u[idx, np.arange(u.shape[1])] < 0, -1.0, 1.0)
    return u * signs, v * signs


def svd_full(a, flops=None):
    """Economy SVD of ``a`` with the sign convention, all min(m, n) triplets."""
    a = np.asarray(a, dtype=np.float64)
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    if flops is not None:
        flops.svd(*a.shape)
    u, v = _fix_signs(u, vt.T)
    return TruncatedSVD(u, s, v)


def svd_truncated(a, r, flops=None):
    """Leading ``r`` singular triplets; ``u @ diag(s) @ v.T`` is a best rank-r approximation."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError("svd_truncated expects a matrix")
    if not 0 <= r <= min(a.shape):
        raise ValueError(f"rank {r} exceeds min dimension of {a.shape}")
    full = svd_full(a, flops=flops)
    return TruncatedSVD(
        np.ascontiguousarray(full.u[:, :r]), full.s[:r].copy(), np.ascontiguousarray(full.v[:, :r])
    )


def singular_values(a):
    return np.linalg.svd(np.asarray(a, dtype=np.float64), compute_uv=False)


def spectral_norm(a):
    s = singular_values(a)
    return float(s[0]) if s.size else 0.0
