"""Dense d-order tensors and multilinear primitives.

Tensors are plain ``numpy.ndarray`` objects of float64. The canonical flat
layout is column-major (Fortran order): the first index varies fastest, so the
mode-1 unfolding of an F-contiguous array is a zero-copy reshape. Unfoldings
follow the Kolda-Bader column ordering, i.e. for mode k the column index runs
over the remaining modes with the lowest remaining mode varying fastest.
"""

import math
import struct
from pathlib import Path

import numpy as np

from .linalg import RANK_RTOL, singular_values

DTNS_MAGIC = b"DTNS0001"


def as_tensor(data, dims=None):
    """Coerce ``data`` to a float64 tensor, optionally from a canonical flat array."""
    arr = np.asarray(data, dtype=np.float64)
    if dims is not None:
        dims = tuple(int(n) for n in dims)
        if arr.size != int(np.prod(dims)):
            raise ValueError(f"data length {arr.size} does not match dims {dims}")
        arr = arr.reshape(dims, order="F")
    if arr.ndim < 2:
        raise ValueError("tensors must have order d >= 2")
    if any(n < 1 for n in arr.shape):
        raise ValueError(f"every dimension must be positive, got {arr.shape}")
    return arr


def flat(t):
    """Canonical (column-major) flat view of ``t``."""
    return np.ravel(t, order="F")


def _check_mode(ndim, mode):
    if not 0 <= mode < ndim:
        raise ValueError(f"mode {mode} out of range for a {ndim}-order tensor")


def matricize(t, mode):
    """Mode-``mode`` unfolding (0-based mode): an n_k x prod_{j!=k} n_j matrix."""
    t = np.asarray(t)
    _check_mode(t.ndim, mode)
    n = t.shape[mode]
    return np.reshape(np.moveaxis(t, mode, 0), (n, -1), order="F")


def tensorize(m, dims, mode):
    """Inverse of :func:`matricize` for the same ``mode`` and target ``dims``."""
    dims = tuple(int(n) for n in dims)
    _check_mode(len(dims), mode)
    m = np.asarray(m)
    rest = int(np.prod(dims)) // dims[mode] if dims[mode] else 0
    if m.shape != (dims[mode], rest):
        raise ValueError(f"matrix of shape {m.shape} cannot fold into {dims} along mode {mode}")
    moved = (dims[mode],) + dims[:mode] + dims[mode + 1:]
    return np.moveaxis(np.reshape(m, moved, order="F"), 0, mode)


def mode_product(t, mode, u, flops=None):
    """Mode-``mode`` product ``t x_mode u`` with ``u`` of shape m x n_mode.

    Satisfies ``matricize(result, mode) == u @ matricize(t, mode)``.
    """
    t = np.asarray(t)
    u = np.asarray(u)
    _check_mode(t.ndim, mode)
    if u.ndim != 2 or u.shape[1] != t.shape[mode]:
        raise ValueError(
            f"matrix of shape {u.shape} incompatible with mode {mode} of size {t.shape[mode]}"
        )
    unfolded = matricize(t, mode)
    if flops is not None:
        flops.matmul(u.shape[0], u.shape[1], unfolded.shape[1], f"x_{mode + 1}")
    dims = t.shape[:mode] + (u.shape[0],) + t.shape[mode + 1:]
    return tensorize(u @ unfolded, dims, mode)


def multi_mode_product(t, matrices, modes=None, transpose=False, flops=None):
    """Apply ``t x_i M_i`` over ``modes`` (default all) in the given order."""
    if modes is None:
        modes = range(len(matrices))
    out = t
    for mode, mat in zip(modes, matrices):
        out = mode_product(out, mode, mat.T if transpose else mat, flops=flops)
    return out


def inner(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"dims mismatch: {a.shape} vs {b.shape}")
    return float(np.vdot(a, b))


def frob_norm(a):
    """Frobenius norm; the correctly rounded sum makes it independent of element order."""
    sq = np.square(np.ravel(a)).tolist()
    return math.sqrt(math.fsum(sq))


def multilinear_rank(t, tol=0.0):
    """Ranks of every unfolding; singular values <= max(tol, 1e-13) * sigma_max are dropped.

    The zero tensor is reported as rank (0, ..., 0).
    """
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    rtol = max(tol, RANK_RTOL)
    ranks = []
    for mode in range(np.ndim(t)):
        s = singular_values(matricize(t, mode))
        if s.size == 0 or s[0] == 0.0:
            ranks.append(0)
        else:
            ranks.append(int(np.count_nonzero(s > rtol * s[0])))
    return tuple(ranks)


def save_dtns(path, t):
    """Write ``t`` in the DTNS v1 binary format."""
    t = np.asarray(t, dtype=np.float64)
    header = DTNS_MAGIC + struct.pack("<I", t.ndim) + struct.pack(f"<{t.ndim}Q", *t.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(flat(t).astype("<f8").tobytes())


def load_dtns(path):
    raw = Path(path).read_bytes()
    if raw[:8] != DTNS_MAGIC:
        raise ValueError(f"{path}: not a DTNS v1 file")
    (d,) = struct.unpack_from("<I", raw, 8)
    dims = struct.unpack_from(f"<{d}Q", raw, 12)
    offset = 12 + 8 * d
    count = int(np.prod(dims))
    if len(raw) - offset != 8 * count:
        raise ValueError(f"{path}: payload holds {(len(raw) - offset) // 8} values, expected {count}")
    values = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
    return as_tensor(values.astype(np.float64), dims)


def load_text(path):
    """Load a tiny whitespace-delimited fixture.

    First non-comment line holds the dims; every following token is a value in
    canonical (column-major) order. Lines starting with ``#`` are ignored.
    """
    lines = [ln.split("#", 1)[0].split() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise ValueError(f"{path}: empty tensor fixture")
    dims = [int(tok) for tok in lines[0]]
    values = [float(tok) for ln in lines[1:] for tok in ln]
    return as_tensor(values, dims)
