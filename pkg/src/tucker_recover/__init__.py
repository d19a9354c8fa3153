"""Low multilinear-rank tensor recovery with single-mode tangent-space gradient steps."""

from .hosvd import ModeOneBasis, TuckerFactorization, h_mode1, st_hosvd, t_hosvd
from .measurement import GaussianOperator, NoiseSpec, SamplingOperator, add_noise, make_rng, sample_omega
from .solvers import SolverConfig, SolverTrace, rgd, run_solver, sempiht, sm_qrgd, tiht
from .tangent import fused_retract, project_dense

__version__ = "0.1.0"
