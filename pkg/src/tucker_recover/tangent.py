"""Single-mode tangent space of a mode-1 unfolding and the fused retraction.

For a basis (U, V) of the mode-1 unfolding of the substitution iterate, the
tangent space is ``{U R^T + L V^T}`` and its orthogonal projector is

    P(Y) = U U^T Y + Y V V^T - U U^T Y V V^T.

Every tensor in that space has a mode-1 unfolding of rank <= 2 r1, so the
first truncation of an ST-HOSVD only needs the SVD of a 2 r1 x 2 r1 matrix.
"""

from dataclasses import dataclass

import numpy as np

from .hosvd import ModeOneBasis, TuckerFactorization, default_order, st_hosvd_steps
from .linalg import FlopCount, qr_thin, svd_truncated
from .tensor_core import frob_norm, matricize, tensorize


@dataclass(eq=False)
class FactoredTangentPoint:
    """``left @ mid @ right.T`` with orthonormal ``left`` (n1 x 2r1) and ``right`` (N x 2r1)."""

    left: np.ndarray
    mid: np.ndarray
    right: np.ndarray

    def matrix(self):
        return self.left @ self.mid @ self.right.T


def _check_basis(z, basis):
    n1 = z.shape[0]
    rest = z.size // n1
    r1 = basis.u.shape[1]
    if basis.u.shape != (n1, r1) or basis.v.shape != (rest, r1):
        raise ValueError(
            f"basis shapes {basis.u.shape}, {basis.v.shape} do not match tensor dims {z.shape}"
        )


def project_dense(z, basis, flops=None):
    """Tangent projection of ``z`` (as a tensor), cheapest product ordering.

    Computes U (U^T Y) + (Y - U U^T Y) V V^T: four n^d r1 products.
    """
    z = np.asarray(z, dtype=np.float64)
    _check_basis(z, basis)
    fc = flops if flops is not None else FlopCount()
    y = matricize(z, 0)
    u, v = basis.u, basis.v
    uty = fc.dot(u.T, y, "U^T Y")
    col_part = fc.dot(u, uty, "U (U^T Y)")
    resid = y - col_part
    row_part = fc.dot(fc.dot(resid, v, "(Y - UU^T Y) V"), v.T, "(.) V^T")
    return tensorize(col_part + row_part, z.shape, 0)


def project_factored(z, basis, flops=None):
    """Tangent projection of ``z`` as ``[U Q1] M [V Q2]^T``.

    With Y1 = (I - U U^T) Y V = Q1 R1 and Y2 = (I - V V^T) Y^T U = Q2 R2,
    M = [[U^T Y V, R2^T], [R1, 0]].
    """
    z = np.asarray(z, dtype=np.float64)
    _check_basis(z, basis)
    fc = flops if flops is not None else FlopCount()
    y = matricize(z, 0)
    u, v = basis.u, basis.v
    r1 = u.shape[1]

    yv = fc.dot(y, v, "Y V")
    ytu = fc.dot(y.T, u, "Y^T U")
    core = fc.dot(u.T, yv, "U^T (Y V)")
    y1 = yv - fc.dot(u, core, "U (U^T Y V)")
    y2 = ytu - fc.dot(v, core.T, "V (V^T Y^T U)")

    # QR of [U Y1] rather than Y1 alone keeps Q1 orthogonal to U even when Y1
    # is (numerically) rank deficient; the leading block of R is then ~I.
    left, r_left = _augmented_qr(u, y1, fc)
    right, r_right = _augmented_qr(v, y2, fc)

    mid = np.zeros((2 * r1, 2 * r1))
    mid[:r1, :r1] = core
    mid[:r1, r1:] = r_right.T
    mid[r1:, :r1] = r_left
    return FactoredTangentPoint(left, mid, right)


def _augmented_qr(basis, y, fc):
    r1 = basis.shape[1]
    if basis.shape[0] < 2 * r1:
        raise ValueError("tangent space needs n >= 2 r1 on both sides of the mode-1 unfolding")
    q, r = qr_thin(np.hstack([basis, y]), flops=fc)
    # top-left of r is the triangular factor of an orthonormal basis: +I up to rounding
    q = np.hstack([basis, q[:, r1:]])
    return q, r[r1:, r1:]


def fused_retract(z, basis, r, flops=None):
    """ST-HOSVD of the tangent projection of ``z``, mode 1 first.

    Returns ``(tucker, next_basis, flops)`` where ``next_basis`` holds the
    leading r1 singular bases of the mode-1 unfolding of the projected
    tensor and ``flops`` counts multiply-adds (leading-order threshold 2 r1),
    including the dense composition of the result.
    """
    z = np.asarray(z, dtype=np.float64)
    r = tuple(int(x) for x in r)
    r1 = r[0]
    fc = flops if flops is not None else FlopCount(threshold=2 * basis.rank)
    _check_basis(z, basis)
    if min(z.shape[0], z.size // z.shape[0]) < 2 * basis.rank:
        return _dense_retract(z, basis, r, fc)
    point = project_factored(z, basis, flops=fc)

    msvd = svd_truncated(point.mid, r1, flops=fc)
    u1 = fc.dot(point.left, msvd.u, "[U Q1] U_M")
    v1 = fc.dot(point.right, msvd.v, "[V Q2] V_M")
    sv = msvd.s[:, None] * msvd.v.T
    b = tensorize(fc.dot(sv, point.right.T, "S_M V_M^T [V Q2]^T"), (r1,) + z.shape[1:], 0)

    rest = [i for i in default_order(r) if i != 0]
    core, factors = st_hosvd_steps(b, r, rest, flops=fc)
    factors[0] = u1
    tucker = TuckerFactorization(core, [factors[i] for i in range(z.ndim)])
    tucker.compose(flops=fc)
    return tucker, ModeOneBasis(u1, v1), fc


def _dense_retract(z, basis, r, fc):
    # tangent space fills a whole side of the unfolding: no factored shortcut
    w = project_dense(z, basis, flops=fc)
    order = (0,) + tuple(i for i in default_order(r) if i != 0)
    svd = svd_truncated(matricize(w, 0), r[0], flops=fc)
    b = tensorize(svd.s[:, None] * svd.v.T, (r[0],) + w.shape[1:], 0)
    core, factors = st_hosvd_steps(b, r, order[1:], flops=fc)
    factors[0] = svd.u
    tucker = TuckerFactorization(core, [factors[i] for i in range(w.ndim)])
    tucker.compose(flops=fc)
    return tucker, ModeOneBasis(svd.u, svd.v), fc


def lemma31_check(x, basis):
    """Relative change of ``x`` under the tangent projection defined by ``basis``."""
    dense = x.compose() if isinstance(x, TuckerFactorization) else np.asarray(x)
    norm = frob_norm(dense)
    if norm == 0.0:
        return 0.0
    return frob_norm(project_dense(dense, basis) - dense) / norm
