"""Iterative solvers for low multilinear-rank recovery from linear measurements.

All four solvers share one contract: ``solver(op, y, config, truth=None)``
returns ``(TuckerFactorization, SolverTrace)``. ``op`` is any object with
``dims``, ``m``, ``apply`` and ``adjoint``. When ``truth`` is given the trace's
``rel_err`` is ``||X - T||_F / ||T||_F`` and stopping uses it; otherwise
``rel_err`` is the relative residual ``||A X - y|| / ||y||``.
"""

import csv
import math
import time
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .hosvd import TuckerFactorization, default_order, h_mode1, st_hosvd, t_hosvd
from .linalg import FlopCount, qr_thin, svd_truncated
from .measurement import PermutedOperator
from .tangent import fused_retract, lemma31_check, project_dense
from .tensor_core import matricize, mode_product, tensorize

TRACE_COLUMNS = (
    "iter", "rel_err", "residual", "alpha", "flops", "wall_ns",
    "monitor1", "monitor2", "monitor3", "lemma31",
)

CONVERGED = "converged"
MAX_ITERS = "max_iters"
DIVERGED = "diverged"
STATIONARY = "stationary"


class DegenerateStepError(ZeroDivisionError):
    """The projected gradient lies in the kernel of the operator (or vanishes)."""


@dataclass
class SolverConfig:
    rank: tuple
    step_rule: str = "normalized"
    alpha: float = 1.0
    max_iters: int = 100
    tol: float = 1e-5
    tangent_mode: int = 1
    monitors: bool = False
    seed: int = 0
    divergence_factor: float = 1e3

    def __post_init__(self):
        self.rank = tuple(int(r) for r in self.rank)
        if self.step_rule not in ("normalized", "constant"):
            raise ValueError(f"unknown step rule {self.step_rule!r}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol < 0:
            raise ValueError("tol must be >= 0")
        if self.step_rule == "constant" and not self.alpha > 0:
            raise ValueError("constant step size must be positive")
        if not 1 <= self.tangent_mode <= len(self.rank):
            raise ValueError(f"tangent_mode {self.tangent_mode} outside 1..{len(self.rank)}")


@dataclass
class IterRecord:
    iter: int
    rel_err: float
    residual: float
    alpha: Optional[float] = None
    flops: int = 0
    wall_ns: int = 0
    monitor1: Optional[float] = None
    monitor2: Optional[float] = None
    monitor3: Optional[float] = None
    lemma31: Optional[float] = None
    threshold_flops: int = 0
    threshold_leading: int = 0
    step_flops: int = 0


@dataclass
class SolverTrace:
    solver: str
    records: list = field(default_factory=list)
    status: str = MAX_ITERS

    @property
    def iterations(self):
        return self.records[-1].iter if self.records else 0

    @property
    def final_rel_err(self):
        return self.records[-1].rel_err

    @property
    def rel_errs(self):
        return [rec.rel_err for rec in self.records]

    def column(self, name):
        return [getattr(rec, name) for rec in self.records]

    def rows(self, wall=True):
        for rec in self.records:
            row = []
            for name in TRACE_COLUMNS:
                value = getattr(rec, name)
                if name == "wall_ns" and not wall:
                    value = None
                row.append(_fmt(value))
            yield row


def frob_norm(a):
    # BLAS norm for the iteration loop; tensor_core.frob_norm is the order-exact version
    return float(np.linalg.norm(np.ravel(a)))


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_trace_csv(path, trace, wall=True):
    """Serialize a trace with the fixed column set; ``wall=False`` leaves wall_ns blank."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        writer.writerows(trace.rows(wall=wall))


def _rel(num, den):
    return num / den if den > 0 else num


class _Run:
    """Error bookkeeping, stopping and trace recording shared by every solver."""

    def __init__(self, name, op, y, config, truth):
        self.op = op
        self.y = np.asarray(y, dtype=np.float64)
        self.config = config
        self.truth = truth
        self.truth_norm = frob_norm(truth) if truth is not None else None
        self.y_norm = frob_norm(self.y)
        self.trace = SolverTrace(name)
        self.err0 = None
        self.clock = time.perf_counter_ns()

    def record(self, k, x_dense, **extra):
        residual = _rel(frob_norm(self.op.apply(x_dense) - self.y), self.y_norm)
        if self.truth is not None:
            err = _rel(frob_norm(x_dense - self.truth), self.truth_norm)
        else:
            err = residual
        now = time.perf_counter_ns()
        self.trace.records.append(
            IterRecord(k, err, residual, wall_ns=now - self.clock, **extra)
        )
        self.clock = now
        if self.err0 is None:
            self.err0 = err
        return self.check(err)

    def check(self, err):
        """True when the run should stop; sets the trace status."""
        if err <= self.config.tol:
            self.trace.status = CONVERGED
            return True
        if not math.isfinite(err) or (
            self.err0 > 0 and err > self.config.divergence_factor * self.err0
        ):
            self.trace.status = DIVERGED
            return True
        return False

    def stationary(self):
        self.trace.status = STATIONARY


def step_size_normalized(g_projected, op):
    """Exact line-search step ``||P G||^2 / ||A(P G)||^2`` along a projected gradient."""
    num = frob_norm(g_projected) ** 2
    den = frob_norm(op.apply(g_projected)) ** 2
    if num == 0.0 or den == 0.0:
        raise DegenerateStepError("projected gradient is zero or invisible to the operator")
    return num / den


def _step(config, direction, op):
    if config.step_rule == "constant":
        if frob_norm(direction) == 0.0:
            raise DegenerateStepError("zero gradient")
        return config.alpha
    return step_size_normalized(direction, op)


def init_point(op, y, r, order=None):
    """ST-HOSVD and mode-1 truncation of the back-projected measurements ``A* y``."""
    z = op.adjoint(np.asarray(y, dtype=np.float64))
    r = tuple(int(x) for x in r)
    if order is None:
        order = (0,) + tuple(i for i in default_order(r) if i != 0)
    x = st_hosvd(z, r, order=order)
    _, basis = h_mode1(z, r[0])
    return x, basis


def monitor_ratios(x, x_hat, w, truth):
    """Ratios ||X-T||/||W-T||, ||X^-T||/||W-T||, ||X^-X||/||W-T|| (bounds sqrt(d)+1, 2, sqrt(d)+1)."""
    den = frob_norm(w - truth)
    nums = (frob_norm(x - truth), frob_norm(x_hat - truth), frob_norm(x_hat - x))
    if den == 0.0:
        return tuple(0.0 if n == 0.0 else math.inf for n in nums)
    return tuple(n / den for n in nums)


def monitor_bounds(d):
    return (math.sqrt(d) + 1, 2.0, math.sqrt(d) + 1)


def sm_qrgd(op, y, config, truth=None):
    """Single-mode quasi-Riemannian gradient descent.

    Each step projects the gradient onto the tangent space of the mode-1
    unfolding of the substitution iterate, moves along it, and retracts with an
    ST-HOSVD whose first truncation runs on a 2 r1 x 2 r1 matrix. A tangent
    mode other than 1 is handled by reordering tensor modes at entry and exit.
    """
    d = len(config.rank)
    mode = config.tangent_mode - 1
    if mode == 0:
        return _sm_qrgd(op, y, config, truth)
    axes = (mode,) + tuple(i for i in range(d) if i != mode)
    inner = SolverConfig(**{**config.__dict__, "rank": tuple(config.rank[a] for a in axes), "tangent_mode": 1})
    t = None if truth is None else np.transpose(truth, axes)
    x, trace = _sm_qrgd(PermutedOperator(op, axes), y, inner, t)
    return x.permute(tuple(np.argsort(axes))), trace


def _sm_qrgd(op, y, config, truth):
    r = config.rank
    run = _Run("sm_qrgd", op, y, config, truth)
    w = op.adjoint(run.y)
    x, basis = init_point(op, run.y, r)
    xd = x.compose()
    if run.record(0, xd, **_sm_diagnostics(config, x, xd, basis, w, truth)):
        return x, run.trace

    for k in range(1, config.max_iters + 1):
        g = op.adjoint(run.y - op.apply(xd))
        step_fc = FlopCount(threshold=2 * r[0])
        pg = project_dense(g, basis, flops=step_fc)
        try:
            alpha = _step(config, pg, op)
        except DegenerateStepError:
            run.stationary()
            break
        # X is a fixed point of the projection, so P(X + a G) = X + a P(G)
        w = xd + alpha * pg
        x, basis, fc = fused_retract(w, basis, r)
        xd = x.compose()
        extra = _sm_diagnostics(config, x, xd, basis, w, truth)
        if run.record(
            k, xd, alpha=alpha, flops=fc.total + step_fc.total,
            threshold_flops=fc.total, threshold_leading=fc.leading,
            step_flops=step_fc.total, **extra,
        ):
            break
    return x, run.trace


def _sm_diagnostics(config, x, xd, basis, w, truth):
    if not config.monitors:
        return {}
    out = {"lemma31": lemma31_check(xd, basis)}
    if truth is not None:
        m1 = matricize(w, 0)
        x_hat = tensorize(basis.u @ (basis.u.T @ m1), w.shape, 0)
        out["monitor1"], out["monitor2"], out["monitor3"] = monitor_ratios(xd, x_hat, w, truth)
    return out


def _projector_step(z, factors, flops=None):
    """``z x_i (U_i U_i^T)`` computed as (z x_i U_i^T) x_i U_i."""
    small = z
    for i, u in enumerate(factors):
        small = mode_product(small, i, u.T, flops=flops)
    for i, u in enumerate(factors):
        small = mode_product(small, i, u, flops=flops)
    return small


def _iht(name, threshold, op, y, config, truth):
    run = _Run(name, op, y, config, truth)
    x = threshold(op.adjoint(run.y), None)
    xd = x.compose()
    if run.record(0, xd):
        return x, run.trace
    for k in range(1, config.max_iters + 1):
        g = op.adjoint(run.y - op.apply(xd))
        step_fc = FlopCount(threshold=2 * config.rank[0])
        direction = _projector_step(g, x.factors, flops=step_fc) if config.step_rule == "normalized" else g
        try:
            alpha = _step(config, direction, op)
        except DegenerateStepError:
            run.stationary()
            break
        fc = FlopCount(threshold=2 * config.rank[0])
        x = threshold(xd + alpha * g, fc)
        xd = x.compose(flops=fc)
        if run.record(
            k, xd, alpha=alpha, flops=fc.total + step_fc.total,
            threshold_flops=fc.total, threshold_leading=fc.leading,
            step_flops=step_fc.total,
        ):
            break
    return x, run.trace


def sempiht(op, y, config, truth=None):
    """IHT with ST-HOSVD thresholding (modes by ascending rank)."""
    r = config.rank
    return _iht("sempiht", lambda z, fc: st_hosvd(z, r, flops=fc), op, y, config, truth)


def tiht(op, y, config, truth=None, variant="NIHT"):
    """IHT with T-HOSVD thresholding; ``CIHT`` forces the constant step."""
    variant = variant.upper()
    if variant not in ("CIHT", "NIHT"):
        raise ValueError(f"unknown TIHT variant {variant!r}")
    if variant == "CIHT" and config.step_rule != "constant":
        config = SolverConfig(**{**config.__dict__, "step_rule": "constant"})
    elif variant == "NIHT" and config.step_rule != "normalized":
        config = SolverConfig(**{**config.__dict__, "step_rule": "normalized"})
    r = config.rank
    return _iht(f"tiht_{variant.lower()}", lambda z, fc: t_hosvd(z, r, flops=fc), op, y, config, truth)


class TuckerTangent(NamedTuple):
    """``D x_i U_i + sum_i C x_i V_i x_{j!=i} U_j`` with ``U_i^T V_i = 0``."""

    d_core: np.ndarray
    v: list

    def dense(self, x, flops=None):
        out = self.d_core
        for j, u in enumerate(x.factors):
            out = mode_product(out, j, u, flops=flops)
        for i, vi in enumerate(self.v):
            term = x.core
            for j, u in enumerate(x.factors):
                term = mode_product(term, j, vi if j == i else u, flops=flops)
            out = out + term
        return out


def tucker_tangent_project(z, x, flops=None):
    """Orthogonal projection of ``z`` onto the tangent space of the Tucker manifold at ``x``.

    D = z x_j U_j^T and V_i = (I - U_i U_i^T) M_i(z x_{j!=i} U_j^T) M_i(C)^+.
    """
    factors = x.factors
    d = len(factors)
    partial = []
    for i in range(d):
        a = z
        for j, u in enumerate(factors):
            if j != i:
                a = mode_product(a, j, u.T, flops=flops)
        partial.append(a)
    d_core = mode_product(partial[0], 0, factors[0].T, flops=flops)
    v = []
    for i, u in enumerate(factors):
        ai = matricize(partial[i], i)
        ci = matricize(x.core, i)
        # M_i(C) has full row rank r_i on the manifold, so the pseudo-inverse is a right inverse
        pinv = np.linalg.pinv(ci)
        if flops is not None:
            flops.svd(*ci.shape)
            flops.matmul(ai.shape[0], ai.shape[1], pinv.shape[1], "A_i M_i(C)^+")
            flops.matmul(u.shape[1], u.shape[0], pinv.shape[1], "U^T V")
            flops.matmul(u.shape[0], u.shape[1], pinv.shape[1], "U (U^T V)")
        vi = ai @ pinv
        vi = vi - u @ (u.T @ vi)
        v.append(vi)
    return TuckerTangent(d_core, v)


def _tangent_retract(x, tangent, alpha, r, flops=None):
    """T-HOSVD at rank ``r`` of ``x + alpha * tangent``, using its <= 2r structure.

    With Q_i spanning [U_i V_i] the point equals S x_i Q_i for a small core S,
    so its T-HOSVD factors are Q_i times those of S.
    """
    d = len(r)
    qs = []
    for u, vi in zip(x.factors, tangent.v):
        stacked = np.hstack([u, vi])
        q = qr_thin(stacked, flops=flops).q if stacked.shape[0] >= stacked.shape[1] else np.eye(u.shape[0])
        qs.append(q)
    proj_u = [q.T @ u for q, u in zip(qs, x.factors)]
    small = x.core + alpha * tangent.d_core
    for j in range(d):
        small = mode_product(small, j, proj_u[j], flops=flops)
    for i in range(d):
        term = alpha * x.core
        for j in range(d):
            term = mode_product(term, j, qs[i].T @ tangent.v[i] if j == i else proj_u[j], flops=flops)
        small = small + term
    inner = t_hosvd(small, r, flops=flops)
    factors = []
    for q, w in zip(qs, inner.factors):
        if flops is not None:
            flops.matmul(q.shape[0], q.shape[1], w.shape[1], "Q_i W_i")
        factors.append(q @ w)
    return TuckerFactorization(inner.core, factors)


def rgd(op, y, config, truth=None):
    """Riemannian gradient descent on the fixed multilinear-rank manifold with T-HOSVD retraction."""
    r = config.rank
    run = _Run("rgd", op, y, config, truth)
    x = t_hosvd(op.adjoint(run.y), r)
    xd = x.compose()
    if run.record(0, xd):
        return x, run.trace
    for k in range(1, config.max_iters + 1):
        g = op.adjoint(run.y - op.apply(xd))
        step_fc = FlopCount(threshold=2 * r[0])
        tangent = tucker_tangent_project(g, x, flops=step_fc)
        pg = tangent.dense(x, flops=step_fc)
        try:
            alpha = _step(config, pg, op)
        except DegenerateStepError:
            run.stationary()
            break
        fc = FlopCount(threshold=2 * r[0])
        x = _tangent_retract(x, tangent, alpha, r, flops=fc)
        xd = x.compose(flops=fc)
        if run.record(
            k, xd, alpha=alpha, flops=fc.total + step_fc.total,
            threshold_flops=fc.total, threshold_leading=fc.leading, step_flops=step_fc.total,
        ):
            break
    return x, run.trace


SOLVERS = {
    "sm_qrgd": sm_qrgd,
    "sempiht": sempiht,
    "tiht": tiht,
    "tiht_niht": lambda op, y, config, truth=None: tiht(op, y, config, truth, "NIHT"),
    "tiht_ciht": lambda op, y, config, truth=None: tiht(op, y, config, truth, "CIHT"),
    "rgd": rgd,
}


def run_solver(name, op, y, config, truth=None):
    try:
        solver = SOLVERS[name]
    except KeyError:
        raise ValueError(f"unknown solver {name!r}; choose from {sorted(SOLVERS)}") from None
    return solver(op, y, config, truth)


@dataclass
class ConvergenceConstants:
    d: int
    r1: int
    kappa1: float
    ric: float

    def __post_init__(self):
        if self.kappa1 < 1:
            raise ValueError("kappa1 must be >= 1")
        if not 0 <= self.ric < 1:
            raise ValueError("restricted isometry constant must lie in [0, 1)")
        if self.d < 2 or self.r1 < 1:
            raise ValueError("need d >= 2 and r1 >= 1")


class GammaDiagnostics(NamedTuple):
    gamma1: float
    gamma2: float
    threshold1: float
    threshold2: float
    gamma1_contracts: bool
    gamma2_contracts: bool
    ric_below_threshold1: bool
    ric_below_threshold2: bool


def gamma_constants(c):
    """Contraction factors for the constant (gamma1) and normalized (gamma2) steps.

    ``ric`` is the user's hypothesis for the first-mode restricted isometry
    constant at rank 3 r1; the thresholds are the sufficient conditions on it.
    """
    root_r = math.sqrt(c.r1) * c.kappa1
    s_d1 = math.sqrt(c.d - 1)
    s_d = math.sqrt(c.d)
    rr = c.ric
    gamma1 = rr * (8 * root_r * ((s_d1 + 1) * (rr + 2) + rr) + s_d + 3)
    gamma2 = 2 * rr / (1 - rr) * (4 * root_r * (2 * (s_d1 + 1) + rr) + s_d + 2)
    threshold1 = min(0.5, 1 / ((20 * s_d1 + 24) * root_r + s_d + 3))
    threshold2 = min(0.5, 1 / ((32 * s_d1 + 40) * root_r + 4 * s_d + 8))
    return GammaDiagnostics(
        gamma1, gamma2, threshold1, threshold2,
        gamma1 < 1, gamma2 < 1, rr < threshold1, rr < threshold2,
    )


def kappa1(truth, r1):
    """sigma_1 / sigma_{r1} of the mode-1 unfolding of the ground truth."""
    s = svd_truncated(matricize(truth, 0), r1).s
    return float(s[0] / s[r1 - 1])
