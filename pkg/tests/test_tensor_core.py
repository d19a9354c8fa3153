import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tucker_recover.tensor_core import (
    as_tensor, flat, frob_norm, inner, load_dtns, load_text, matricize,
    mode_product, multilinear_rank, save_dtns, tensorize,
)

from conftest import random_tucker

shapes = st.lists(st.integers(1, 4), min_size=2, max_size=4).map(tuple)
tensors = shapes.flatmap(
    lambda s: arrays(np.float64, s, elements=st.floats(-10, 10, allow_nan=False))
)


def test_matricize_small_example():
    t = as_tensor(np.arange(1, 9), (2, 2, 2))
    np.testing.assert_array_equal(matricize(t, 0), [[1, 3, 5, 7], [2, 4, 6, 8]])
    np.testing.assert_array_equal(tensorize(np.array([[1, 3, 5, 7], [2, 4, 6, 8]]), (2, 2, 2), 0), t)


def test_matricize_columns_follow_lower_modes_first():
    # entry (i1, i2, i3) of a 2x3x4 tensor sits in column i1 + 2*i3 of the mode-2 unfolding
    t = np.arange(24.0).reshape((2, 3, 4), order="F")
    m = matricize(t, 1)
    for i1 in range(2):
        for i2 in range(3):
            for i3 in range(4):
                assert m[i2, i1 + 2 * i3] == t[i1, i2, i3]


def test_mode1_unfolding_is_a_view():
    t = np.asfortranarray(np.random.default_rng(0).standard_normal((3, 4, 5)))
    assert np.shares_memory(matricize(t, 0), t)


def test_matrix_is_its_own_mode1_unfolding():
    a = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(matricize(a, 0), a)


@given(tensors)
def test_roundtrip_every_mode(t):
    for k in range(t.ndim):
        assert np.array_equal(tensorize(matricize(t, k), t.shape, k), t)
        assert frob_norm(matricize(t, k)) == frob_norm(t)


def test_tensorize_zero():
    assert not tensorize(np.zeros((3, 8)), (2, 3, 4), 1).any()


def test_mode_product_identity_and_zero(rng):
    t = rng.standard_normal((3, 4, 5))
    np.testing.assert_array_equal(mode_product(t, 1, np.eye(4)), t)
    z = mode_product(t, 2, np.zeros((2, 5)))
    assert z.shape == (3, 4, 2) and not z.any()


def test_mode_product_matches_einsum(rng):
    t = rng.standard_normal((3, 4, 5))
    u = rng.standard_normal((6, 4))
    ref = np.einsum("ijk,aj->iak", t, u)
    out = mode_product(t, 1, u)
    assert np.linalg.norm(out - ref) <= 1e-12 * np.linalg.norm(ref)
    np.testing.assert_allclose(matricize(out, 1), u @ matricize(t, 1), rtol=1e-12)


def test_mode_products_commute(rng):
    t = rng.standard_normal((3, 4, 5))
    a, b = rng.standard_normal((2, 3)), rng.standard_normal((6, 4))
    np.testing.assert_allclose(
        mode_product(mode_product(t, 0, a), 1, b), mode_product(mode_product(t, 1, b), 0, a), rtol=1e-12
    )


@given(st.integers(0, 2**32 - 1))
def test_mode_product_norm_bound(seed):
    rng = np.random.default_rng(seed)
    t = rng.standard_normal((3, 4, 2))
    u = rng.standard_normal((5, 4))
    # spectral norm via the Gram eigenvalues, independent of the SVD routine
    spec = np.sqrt(np.linalg.eigvalsh(u.T @ u).max())
    assert frob_norm(mode_product(t, 1, u)) <= spec * frob_norm(t) * (1 + 1e-12)


def test_mode_product_shape_check():
    with pytest.raises(ValueError):
        mode_product(np.zeros((2, 3)), 0, np.zeros((2, 3)))


def test_inner_and_norm():
    t = np.arange(8.0).reshape(2, 2, 2)
    assert inner(t, t) == pytest.approx(frob_norm(t) ** 2)
    assert inner(t, np.zeros_like(t)) == 0.0
    assert frob_norm(np.ones((2, 2))) == 2.0


def test_multilinear_rank(rng):
    assert multilinear_rank(random_tucker(rng, (6, 7, 5), (2, 3, 2))) == (2, 3, 2)
    assert multilinear_rank(np.zeros((3, 3, 3))) == (0, 0, 0)
    x = np.einsum("i,j,k,l->ijkl", *(rng.standard_normal(n) for n in (2, 3, 4, 5)))
    assert multilinear_rank(x) == (1, 1, 1, 1)


def test_as_tensor_validation():
    with pytest.raises(ValueError):
        as_tensor(np.arange(5), (2, 3))
    with pytest.raises(ValueError):
        as_tensor(np.arange(3))


def test_dtns_roundtrip(tmp_path, rng):
    t = rng.standard_normal((3, 2, 4))
    save_dtns(tmp_path / "t.dtns", t)
    raw = (tmp_path / "t.dtns").read_bytes()
    assert raw[:8] == b"DTNS0001"
    # payload is column-major: first value is t[0,0,0], second t[1,0,0]
    vals = np.frombuffer(raw[12 + 24:], dtype="<f8")
    assert vals[1] == t[1, 0, 0]
    np.testing.assert_array_equal(load_dtns(tmp_path / "t.dtns"), t)


def test_dtns_truncated(tmp_path):
    save_dtns(tmp_path / "t.dtns", np.ones((2, 2)))
    (tmp_path / "t.dtns").write_bytes((tmp_path / "t.dtns").read_bytes()[:-8])
    with pytest.raises(ValueError):
        load_dtns(tmp_path / "t.dtns")


def test_load_text(tmp_path):
    (tmp_path / "t.txt").write_text("# tiny\n2 2 2\n1 2 3 4\n5 6 7 8\n")
    t = load_text(tmp_path / "t.txt")
    np.testing.assert_array_equal(flat(t), np.arange(1, 9))
