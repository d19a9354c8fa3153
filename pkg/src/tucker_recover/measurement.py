"""Linear measurement operators, seeded streams and additive noise."""

import math
import zlib
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .tensor_core import flat, frob_norm

RNG_ALGORITHM = "numpy-Philox4x64-10/SeedSequence"

# rows generated per counter block in the Gaussian ensemble
GAUSSIAN_BLOCK = 64
GAUSSIAN_CACHE_LIMIT = 10**8


def _key(part):
    if isinstance(part, (int, np.integer)):
        return int(part)
    return zlib.crc32(str(part).encode())


def make_rng(seed, *stream):
    """Counter-based Philox generator for ``seed`` split along ``stream`` keys.

    Stream keys may be ints or strings (strings hash through CRC-32), e.g.
    ``make_rng(7, "phase", trial, "omega")``.
    """
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(p) for p in stream))
    return np.random.Generator(np.random.Philox(seq))


class SamplingOperator:
    """Entry sampling on a set of distinct multi-indices (0-based)."""

    def __init__(self, dims, omega, seed=None):
        self.dims = tuple(int(n) for n in dims)
        omega = np.asarray(omega, dtype=np.int64).reshape(-1, len(self.dims))
        if omega.size and (np.any(omega < 0) or np.any(omega >= np.array(self.dims))):
            raise ValueError("sample index out of range")
        linear = np.ravel_multi_index(tuple(omega.T), self.dims, order="F") if omega.size else omega[:, 0]
        linear = np.sort(linear)
        if np.any(np.diff(linear) == 0):
            raise ValueError("duplicate sample indices")
        self.linear = linear
        self.seed = seed

    @classmethod
    def from_linear(cls, dims, linear, seed=None):
        dims = tuple(int(n) for n in dims)
        idx = np.stack(np.unravel_index(np.asarray(linear, dtype=np.int64), dims, order="F"), axis=1)
        return cls(dims, idx, seed=seed)

    @property
    def m(self):
        return self.linear.size

    @property
    def omega(self):
        """Sampled multi-indices, sorted by canonical (column-major) position."""
        return np.stack(np.unravel_index(self.linear, self.dims, order="F"), axis=1)

    def apply(self, x):
        x = np.asarray(x)
        if x.shape != self.dims:
            raise ValueError(f"tensor dims {x.shape} != operator dims {self.dims}")
        return flat(x)[self.linear]

    def adjoint(self, y):
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.m,):
            raise ValueError(f"vector length {y.shape} != m = {self.m}")
        out = np.zeros(int(np.prod(self.dims)))
        out[self.linear] = y
        return out.reshape(self.dims, order="F")

    def mask(self):
        return self.adjoint(np.ones(self.m)) != 0


def sample_omega(dims, rho, seed, stream=()):
    """``round(rho * prod(dims))`` distinct entries, uniformly without replacement."""
    if not 0 < rho <= 1:
        raise ValueError(f"sampling ratio must lie in (0, 1], got {rho}")
    total = int(np.prod(dims))
    m = int(math.floor(rho * total + 0.5))
    rng = make_rng(seed, "omega", *stream)
    linear = rng.choice(total, size=m, replace=False) if m < total else np.arange(total)
    return SamplingOperator.from_linear(dims, linear, seed=seed)


class GaussianOperator:
    """Dense ensemble with i.i.d. N(0, 1/m) sensing tensors, regenerated from the seed.

    Rows come in blocks of ``GAUSSIAN_BLOCK``; block ``b`` is drawn from its own
    Philox stream, so lazy and cached evaluation produce identical rows.
    """

    def __init__(self, dims, m, seed, cache=None):
        self.dims = tuple(int(n) for n in dims)
        self.m = int(m)
        self.seed = int(seed)
        self.size = int(np.prod(self.dims))
        self.cache = self.m * self.size <= GAUSSIAN_CACHE_LIMIT if cache is None else cache

    def block(self, b):
        lo = b * GAUSSIAN_BLOCK
        rows = min(GAUSSIAN_BLOCK, self.m - lo)
        rng = make_rng(self.seed, "gaussian", b)
        return rng.standard_normal((rows, self.size)) / math.sqrt(self.m)

    def rows(self, start=0, stop=None):
        stop = self.m if stop is None else stop
        b0, b1 = start // GAUSSIAN_BLOCK, (stop - 1) // GAUSSIAN_BLOCK
        mats = np.vstack([self.block(b) for b in range(b0, b1 + 1)])
        return mats[start - b0 * GAUSSIAN_BLOCK: stop - b0 * GAUSSIAN_BLOCK]

    @cached_property
    def matrix(self):
        return self.rows()

    def _blocks(self):
        if self.cache:
            yield 0, self.matrix
            return
        for b in range(-(-self.m // GAUSSIAN_BLOCK)):
            yield b * GAUSSIAN_BLOCK, self.block(b)

    def apply(self, x):
        x = np.asarray(x)
        if x.shape != self.dims:
            raise ValueError(f"tensor dims {x.shape} != operator dims {self.dims}")
        v = flat(x)
        out = np.empty(self.m)
        for lo, rows in self._blocks():
            out[lo: lo + rows.shape[0]] = rows @ v
        return out

    def adjoint(self, y):
        y = np.asarray(y, dtype=np.float64)
        if y.shape != (self.m,):
            raise ValueError(f"vector length {y.shape} != m = {self.m}")
        out = np.zeros(self.size)
        for lo, rows in self._blocks():
            out += rows.T @ y[lo: lo + rows.shape[0]]
        return out.reshape(self.dims, order="F")


class PermutedOperator:
    """View of ``op`` acting on tensors whose modes were reordered by ``axes``."""

    def __init__(self, op, axes):
        self.op = op
        self.axes = tuple(axes)
        self.inverse = tuple(np.argsort(self.axes))
        self.dims = tuple(op.dims[a] for a in self.axes)
        self.m = op.m

    def apply(self, x):
        return self.op.apply(np.transpose(x, self.inverse))

    def adjoint(self, y):
        return np.transpose(self.op.adjoint(y), self.axes)


@dataclass(frozen=True)
class NoiseSpec:
    snr_db: float = math.inf
    seed: int = 0

    def __post_init__(self):
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise ValueError(f"snr_db must be finite (or +inf for no noise), got {self.snr_db}")


def noise_sigma(t, snr_db):
    """Noise standard deviation giving ``snr_db = 10 log10(||t||^2 / (N sigma^2))``."""
    if math.isinf(snr_db):
        return 0.0
    return math.sqrt(frob_norm(t) ** 2 / (np.size(t) * 10 ** (snr_db / 10)))


def add_noise(t, spec, stream=()):
    t = np.asarray(t, dtype=np.float64)
    sigma = noise_sigma(t, spec.snr_db)
    if sigma == 0.0:
        return t.copy()
    rng = make_rng(spec.seed, "noise", *stream)
    noise = rng.standard_normal(t.size).reshape(t.shape, order="F")
    return t + sigma * noise


def write_omega_csv(path, op):
    lines = [
        "# dims=" + ",".join(str(n) for n in op.dims),
        f"# seed={op.seed}",
        f"# rng={RNG_ALGORITHM}",
        "# index_base=0",
        ",".join(f"i{k + 1}" for k in range(len(op.dims))),
    ]
    lines += [",".join(str(int(i)) for i in row) for row in op.omega]
    Path(path).write_text("\n".join(lines) + "\n")


def read_omega_csv(path):
    meta = {}
    rows = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key] = value
        elif line and not line.startswith("i"):
            rows.append([int(tok) for tok in line.split(",")])
    dims = tuple(int(n) for n in meta["dims"].split(","))
    seed = meta.get("seed")
    seed = None if seed in (None, "None") else int(seed)
    return SamplingOperator(dims, np.array(rows, dtype=np.int64).reshape(-1, len(dims)), seed=seed)
