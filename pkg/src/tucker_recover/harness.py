"""Seeded synthetic instances and the desk-scale experiment drivers.

Every driver writes CSV whose data rows depend only on the experiment spec:
wall-clock measurements go to a separate ``<kind>_timings.csv`` sidecar so the
main files can be compared byte for byte across reruns.
"""

import csv
import hashlib
import math
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .hosvd import TuckerFactorization, t_hosvd
from .linalg import qr_thin, singular_values
from .measurement import RNG_ALGORITHM, GaussianOperator, NoiseSpec, add_noise, make_rng, sample_omega
from .solvers import DIVERGED, TRACE_COLUMNS, SolverConfig, _fmt, kappa1, run_solver
from .tensor_core import matricize

KINDS = ("complete", "phase", "noise", "modes", "cond", "compare")
SUCCESS_TOL = 1e-5


class ConfigError(ValueError):
    pass


def _ints(text):
    return tuple(int(tok) for tok in _split(text))


def _floats(text):
    return tuple(float(tok) for tok in _split(text))


def _strs(text):
    return tuple(_split(text))


def _split(text):
    toks = [tok.strip() for tok in str(text).replace(";", ",").split(",")]
    return [tok for tok in toks if tok]


def _bool(text):
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class ExperimentSpec:
    """Flat description of one experiment.

    ``rank`` is the multilinear rank for every kind except ``phase``, which
    sweeps isotropic ranks from ``ranks`` against sampling ratios ``rhos``.
    """

    kind: str
    dims: tuple = (20, 20, 20)
    rank: tuple = (2, 2, 2)
    ranks: tuple = (1, 2, 3)
    rho: float = 0.4
    rhos: tuple = (0.1, 0.2, 0.3, 0.4, 0.5)
    snrs: tuple = (60.0, 80.0, 100.0)
    kappas: tuple = (1.0, 5.0, 10.0)
    tangent_modes: tuple = ()
    solvers: tuple = ("sm_qrgd",)
    operator: str = "sampling"
    measurements: int = 0
    step_rule: str = "normalized"
    alpha: float = 1.0
    trials: int = 10
    seed: int = 0
    tol: float = 1e-5
    max_iters: int = 100
    monitors: bool = False
    traces: bool = True
    jobs: int = 1
    out: str = "results"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        self.dims = tuple(int(n) for n in self.dims)
        self.rank = tuple(int(r) for r in self.rank)
        if len(self.dims) < 2:
            raise ConfigError("need at least two dims")
        if self.kind != "phase" and len(self.rank) != len(self.dims):
            raise ConfigError(f"rank {self.rank} does not match dims {self.dims}")
        if any(r < 1 or r > n for r, n in zip(self.rank, self.dims)):
            raise ConfigError(f"rank {self.rank} outside 1..dims")
        for name in ("ranks", "rhos", "snrs", "kappas", "solvers"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must be nonempty")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.operator not in ("sampling", "gaussian"):
            raise ConfigError(f"unknown operator {self.operator!r}")
        for rho in (self.rho,) + tuple(self.rhos):
            if not 0 < rho <= 1:
                raise ConfigError(f"sampling ratio {rho} outside (0, 1]")
        if any(k < 1 for k in self.kappas):
            raise ConfigError("kappa2 values must be >= 1")
        if self.max_iters < 1 or self.tol < 0:
            raise ConfigError("need max_iters >= 1 and tol >= 0")

    def canonical(self):
        """Deterministic ``key=value`` text of every field that affects results."""
        lines = []
        for f in fields(self):
            if f.name in ("out", "jobs"):
                continue
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = ",".join(str(v) for v in value)
            lines.append(f"{f.name}={value}")
        return "\n".join(lines) + "\n"

    @property
    def spec_hash(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def solver_config(self, rank=None, tangent_mode=1):
        return SolverConfig(
            rank=self.rank if rank is None else rank,
            step_rule=self.step_rule, alpha=self.alpha, max_iters=self.max_iters,
            tol=self.tol, tangent_mode=tangent_mode, monitors=self.monitors, seed=self.seed,
        )


_PARSERS = {
    "dims": _ints, "rank": _ints, "ranks": _ints, "tangent_modes": _ints,
    "rhos": _floats, "snrs": _floats, "kappas": _floats,
    "solvers": _strs,
    "rho": float, "alpha": float, "tol": float,
    "measurements": int, "trials": int, "seed": int, "max_iters": int, "jobs": int,
    "monitors": _bool, "traces": _bool,
    "kind": str, "operator": str, "step_rule": str, "out": str,
}


def parse_config(text, **overrides):
    """Parse the flat ``key = value`` format (``#`` comments, comma-separated lists)."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"line {lineno}: expected key = value")
        if key not in _PARSERS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _PARSERS[key](value.strip())
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    kind = overrides.pop("kind", None)
    if kind is not None:
        if values.setdefault("kind", kind) != kind:
            raise ConfigError(f"config describes a {values['kind']!r} experiment, not {kind!r}")
    values.update({k: v for k, v in overrides.items() if v is not None})
    if "kind" not in values:
        raise ConfigError("config must set kind")
    return ExperimentSpec(**values)


def load_config(path, **overrides):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, **overrides)


@dataclass(eq=False)
class GroundTruth:
    tucker: TuckerFactorization
    dense: np.ndarray
    kappa1: float


@dataclass(eq=False)
class SyntheticInstance:
    truth: GroundTruth
    op: object
    y: np.ndarray
    noise: NoiseSpec = field(default_factory=NoiseSpec)


def synth_tensor(dims, rank, seed, stream=()):
    """Gaussian tensor truncated by T-HOSVD to multilinear rank ``rank``."""
    dims = tuple(int(n) for n in dims)
    rng = make_rng(seed, "tensor", *stream)
    g = rng.standard_normal(int(np.prod(dims))).reshape(dims, order="F")
    tucker = t_hosvd(g, rank)
    dense = tucker.compose()
    return GroundTruth(tucker, dense, kappa1(dense, rank[0]))


def synth_conditioned(n, r, kappa2, seed, stream=()):
    """Cubic tensor with mode-2 condition number ``kappa2`` and modes 1, 3 perfectly conditioned.

    Core entry (j1, j2, j3) (1-based) is sigma_{j2} / sqrt(r) when
    j1 + j2 + j3 = 0 mod r, zero otherwise; sigma runs linearly from 1 to 1/kappa2.
    """
    if kappa2 < 1:
        raise ValueError("kappa2 must be >= 1")
    sigma = np.linspace(1.0, 1.0 / kappa2, r)
    j = np.arange(1, r + 1)
    j1, j2, j3 = np.meshgrid(j, j, j, indexing="ij")
    core = np.where((j1 + j2 + j3) % r == 0, sigma[j2 - 1] / math.sqrt(r), 0.0)
    rng = make_rng(seed, "conditioned", *stream)
    factors = [qr_thin(rng.standard_normal((n, r))).q for _ in range(3)]
    tucker = TuckerFactorization(core, factors)
    dense = tucker.compose()
    return GroundTruth(tucker, dense, kappa1(dense, r))


def mode_condition_numbers(t, r):
    out = []
    for mode in range(np.ndim(t)):
        s = singular_values(matricize(t, mode))
        out.append(float(s[0] / s[r[mode] - 1]))
    return tuple(out)


def make_instance(spec, truth, stream, rho=None, snr_db=math.inf):
    """Operator, noisy measurements and ground truth for one trial."""
    dims = truth.dense.shape
    if spec.operator == "sampling":
        op = sample_omega(dims, spec.rho if rho is None else rho, spec.seed, stream=stream)
    else:
        m = spec.measurements or int(math.floor((spec.rho if rho is None else rho) * np.prod(dims) + 0.5))
        op = GaussianOperator(dims, m, make_rng(spec.seed, "gaussian-seed", *stream).integers(2**63))
    noise = NoiseSpec(snr_db, int(make_rng(spec.seed, "noise-seed", *stream).integers(2**63)))
    y = op.apply(add_noise(truth.dense, noise))
    return SyntheticInstance(truth, op, y, noise)


@dataclass
class RunResult:
    key: tuple
    solver: str
    status: str
    iters: int
    rel_err: float
    trace_rows: list
    wall_ns: int
    flops: int
    threshold_flops: float
    threshold_leading: float
    step_flops: float


def _solve(spec, inst, solver, config):
    x, trace = run_solver(solver, inst.op, inst.y, config, truth=inst.truth.dense)
    recs = trace.records[1:]
    mean = (lambda name: float(np.mean([getattr(rec, name) for rec in recs]))) if recs else (lambda name: 0.0)
    return RunResult(
        key=(), solver=solver, status=trace.status, iters=trace.iterations,
        rel_err=trace.final_rel_err,
        trace_rows=list(trace.rows(wall=False)) if spec.traces else [],
        wall_ns=sum(rec.wall_ns for rec in trace.records),
        flops=sum(rec.flops for rec in trace.records),
        threshold_flops=mean("threshold_flops"),
        threshold_leading=mean("threshold_leading"),
        step_flops=mean("step_flops"),
    )


def _task(args):
    spec, kind_task = args
    return _TASKS[kind_task[0]](spec, *kind_task[1:])


def _complete_task(spec, trial):
    truth = synth_tensor(spec.dims, spec.rank, spec.seed, ("complete", trial))
    inst = make_instance(spec, truth, ("complete", trial))
    out = []
    for solver in spec.solvers:
        res = _solve(spec, inst, solver, spec.solver_config())
        res.key = (trial,)
        out.append(res)
    return out


def _phase_task(spec, r, ri, trial):
    rank = (r,) * len(spec.dims)
    truth = synth_tensor(spec.dims, rank, spec.seed, ("phase", r, trial))
    out = []
    for rho_index, rho in enumerate(spec.rhos):
        inst = make_instance(spec, truth, ("phase", r, rho_index, trial), rho=rho)
        res = _solve(spec, inst, spec.solvers[0], spec.solver_config(rank=rank))
        res.key = (ri, rho_index, trial)
        out.append(res)
    return out


def _noise_task(spec, trial):
    truth = synth_tensor(spec.dims, spec.rank, spec.seed, ("noise", trial))
    out = []
    for si, snr in enumerate(spec.snrs):
        inst = make_instance(spec, truth, ("noise", si, trial), snr_db=snr)
        for solver in spec.solvers:
            res = _solve(spec, inst, solver, spec.solver_config())
            res.key = (si, trial)
            out.append(res)
    return out


def _modes_task(spec, trial):
    truth = synth_tensor(spec.dims, spec.rank, spec.seed, ("modes", trial))
    # one instance for every mode: identical seeds give identical samples
    inst = make_instance(spec, truth, ("modes", trial))
    out = []
    for mode in spec.tangent_modes or tuple(range(1, len(spec.dims) + 1)):
        res = _solve(spec, inst, "sm_qrgd", spec.solver_config(tangent_mode=mode))
        res.key = (mode, trial)
        out.append(res)
    return out


def _cond_task(spec, ki, trial):
    n, r = spec.dims[0], spec.rank[0]
    truth = synth_conditioned(n, r, spec.kappas[ki], spec.seed, ("cond", ki, trial))
    inst = make_instance(spec, truth, ("cond", ki, trial))
    res = _solve(spec, inst, spec.solvers[0], spec.solver_config(rank=(r,) * 3))
    res.key = (ki, trial)
    return [res]


_TASKS = {
    "complete": _complete_task,
    "phase": _phase_task,
    "noise": _noise_task,
    "modes": _modes_task,
    "cond": _cond_task,
    "compare": _complete_task,
}


def _run_tasks(spec, tasks):
    jobs = [(spec, t) for t in tasks]
    if spec.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            batches = list(pool.map(_task, jobs))
    else:
        batches = [_task(j) for j in jobs]
    results = [res for batch in batches for res in batch]
    # order by (grid cell, trial) whatever the scheduling
    results.sort(key=lambda res: (res.key, spec.solvers.index(res.solver) if res.solver in spec.solvers else 0))
    return results


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    csv_path: Path
    rows: list
    results: list
    paths: list

    @property
    def diverged(self):
        return sum(res.status == DIVERGED for res in self.results)


def _header(spec):
    return [
        f"# kind={spec.kind}",
        f"# spec_hash={spec.spec_hash}",
        f"# rng={RNG_ALGORITHM}",
        f"# seed={spec.seed}",
    ]


def _write_csv(path, spec, columns, rows):
    with open(path, "w", newline="") as fh:
        for line in _header(spec):
            fh.write(line + "\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows([[_fmt(v) if not isinstance(v, str) else v for v in row] for row in rows])


def _write_meta(out, spec, paths):
    lines = [
        f"spec_hash={spec.spec_hash}",
        f"rng={RNG_ALGORITHM}",
        f"seed={spec.seed}",
        f"tucker_recover={__version__}",
        f"numpy={np.__version__}",
        f"python={platform.python_version()}",
        "outputs=" + ",".join(p.name for p in paths),
        "",
        "[spec]",
        spec.canonical(),
    ]
    (out / "meta.txt").write_text("\n".join(lines))


def _finish(spec, out, summary_cols, rows, results, prefix_cols, prefixes):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    main = out / f"{spec.kind}.csv"
    _write_csv(main, spec, summary_cols, rows)
    paths.append(main)
    if spec.traces:
        trace_rows = []
        for prefix, res in zip(prefixes, results):
            trace_rows += [list(prefix) + row for row in res.trace_rows]
        path = out / f"{spec.kind}_traces.csv"
        _write_csv(path, spec, list(prefix_cols) + list(TRACE_COLUMNS), trace_rows)
        paths.append(path)
    timing = out / f"{spec.kind}_timings.csv"
    with open(timing, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(list(prefix_cols) + ["wall_ns"])
        for prefix, res in zip(prefixes, results):
            writer.writerow([_fmt(v) if not isinstance(v, str) else v for v in prefix] + [res.wall_ns])
    paths.append(timing)
    _write_meta(out, spec, paths)
    return ExperimentResult(spec, main, rows, results, paths + [out / "meta.txt"])


def _success(res):
    return res.rel_err <= SUCCESS_TOL


def run_complete(spec, out=None):
    results = _run_tasks(spec, [("complete", t) for t in range(spec.trials)])
    cols = ("trial", "solver", "status", "iters", "rel_err", "success")
    rows = [(res.key[0], res.solver, res.status, res.iters, res.rel_err, int(_success(res))) for res in results]
    prefixes = [(res.key[0], res.solver) for res in results]
    return _finish(spec, out or spec.out, cols, rows, results, ("trial", "solver"), prefixes)


def run_phase_transition(spec, out=None):
    tasks = [("phase", r, ri, t) for ri, r in enumerate(spec.ranks) for t in range(spec.trials)]
    results = _run_tasks(spec, tasks)
    rows = []
    for ri, r in enumerate(spec.ranks):
        for rho_index, rho in enumerate(spec.rhos):
            cell = [res for res in results if res.key[:2] == (ri, rho_index)]
            wins = [res for res in cell if _success(res)]
            mean_iters = float(np.mean([res.iters for res in wins])) if wins else ""
            rows.append((r, rho, len(wins), len(cell), mean_iters))
    prefixes = [(spec.ranks[res.key[0]], spec.rhos[res.key[1]], res.key[2]) for res in results]
    cols = ("r", "rho", "successes", "trials", "mean_iters")
    return _finish(spec, out or spec.out, cols, rows, results, ("r", "rho", "trial"), prefixes)


def run_noise(spec, out=None):
    results = _run_tasks(spec, [("noise", t) for t in range(spec.trials)])
    results.sort(key=lambda res: (res.key, spec.solvers.index(res.solver)))
    rows = [
        (spec.snrs[res.key[0]], res.solver, res.key[1], res.status, res.iters, res.rel_err)
        for res in results
    ]
    prefixes = [row[:3] for row in rows]
    cols = ("snr_db", "solver", "trial", "status", "iters", "rel_err")
    return _finish(spec, out or spec.out, cols, rows, results, ("snr_db", "solver", "trial"), prefixes)


def run_mode_selection(spec, out=None):
    results = _run_tasks(spec, [("modes", t) for t in range(spec.trials)])
    results.sort(key=lambda res: (res.key[1], res.key[0]))
    rows = [(res.key[1], res.key[0], res.status, res.iters, res.rel_err) for res in results]
    prefixes = [(res.key[1], res.key[0]) for res in results]
    cols = ("trial", "tangent_mode", "status", "iters", "rel_err")
    return _finish(spec, out or spec.out, cols, rows, results, ("trial", "tangent_mode"), prefixes)


def run_cond(spec, out=None):
    tasks = [("cond", ki, t) for ki in range(len(spec.kappas)) for t in range(spec.trials)]
    results = _run_tasks(spec, tasks)
    rows = [(spec.kappas[res.key[0]], res.key[1], res.status, res.iters, res.rel_err) for res in results]
    prefixes = [row[:2] for row in rows]
    cols = ("kappa2", "trial", "status", "iters", "rel_err")
    return _finish(spec, out or spec.out, cols, rows, results, ("kappa2", "trial"), prefixes)


def run_compare(spec, out=None):
    """Per-solver summary: iterations, error and mean per-iteration flop split."""
    results = _run_tasks(spec, [("compare", t) for t in range(spec.trials)])
    cols = (
        "trial", "solver", "status", "iters", "rel_err", "flops",
        "threshold_flops_per_iter", "threshold_leading_per_iter", "step_flops_per_iter",
    )
    rows = [
        (res.key[0], res.solver, res.status, res.iters, res.rel_err, res.flops,
         res.threshold_flops, res.threshold_leading, res.step_flops)
        for res in results
    ]
    prefixes = [(res.key[0], res.solver) for res in results]
    return _finish(spec, out or spec.out, cols, rows, results, ("trial", "solver"), prefixes)


RUNNERS = {
    "complete": run_complete,
    "phase": run_phase_transition,
    "noise": run_noise,
    "modes": run_mode_selection,
    "cond": run_cond,
    "compare": run_compare,
}


def run_experiment(spec, out=None):
    return RUNNERS[spec.kind](spec, out)


def read_csv_rows(path):
    """Data rows (header comments stripped) of a harness CSV, for comparisons."""
    with open(path, newline="") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.reader(lines))


def success_rates(result) -> Optional[dict]:
    """``{r: [rate per rho]}`` from a phase result."""
    if result.spec.kind != "phase":
        return None
    table = {}
    for r, _rho, wins, trials, _ in result.rows:
        table.setdefault(r, []).append(wins / trials)
    return table
