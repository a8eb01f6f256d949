"""The compiled kernels must agree with the numpy fallback bit for bit."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bnlab import kernels
from bnlab._kernels_py import composition_codes as py_codes
from bnlab._kernels_py import tree_children as py_children

BACKENDS = kernels.backends()
needs_compiled = pytest.mark.skipif("cython" not in BACKENDS, reason="compiled extension not built")


def _tree_rows(n, levels, seed=0):
    rng = np.random.default_rng(seed)
    rows = np.sort(rng.uniform(-3, 3, n))[None, :]
    for _ in range(levels):
        rows = py_children(rows, 1e-12)
    return rows


def test_backend_name():
    assert kernels.BACKEND in BACKENDS


def test_children_by_hand():
    out = py_children(np.array([[1.0, 2.0, 3.0, 4.0, 5.0]]), 0.0)
    np.testing.assert_array_equal(out, [[0, 0, 0, 1, 2], [2, 1, 0, 0, 0]])


def test_snap_merges_close_values():
    row = np.array([[0.0, 1.0, 1.0 + 1e-14, 5.0]])
    # negative child is (1.75, 0.75, 0.75 - 1e-14, 0)
    assert py_children(row, 0.0)[1, 1] != py_children(row, 0.0)[1, 2]
    out = py_children(row, 1e-12)
    assert out[1, 1] == out[1, 2]


@pytest.mark.parametrize(
    "row, code",
    [
        ([0, 1, 1, 1, 1], kernels.A_1_REST),
        ([1, 0, 0, 0, 0], kernels.A_1_REST),
        ([0, 0, 0, 0, 1], kernels.B_REST_1),
        ([0, 1, 2, 2, 2], kernels.C3_1_1_REST),
        ([0, 0, 0, 1, 2], kernels.D3_REST_1_1),
        ([0, 0, 1, 1, 1], kernels.C2_2_REST),
        ([0, 0, 0, 1, 1], kernels.D2_REST_2),
        ([0, 1, 2, 3, 4], kernels.OTHER),
        ([3, 3, 3, 3, 3], kernels.OTHER),
    ],
)
def test_composition_codes(row, code):
    assert py_codes(np.array([row], dtype=float))[0] == code


@needs_compiled
@pytest.mark.parametrize("tol", [0.0, 1e-12, 0.05])
def test_children_identical(tol):
    rows = _tree_rows(9, 6)
    a = BACKENDS["python"].tree_children(rows, tol)
    b = BACKENDS["cython"].tree_children(rows, tol)
    assert a.tobytes() == b.tobytes()


@needs_compiled
@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(2, 9)), elements=st.floats(-1e6, 1e6)))
def test_children_identical_random(rows):
    rows = np.sort(rows, axis=1)
    for tol in (0.0, 1e-12):
        a = BACKENDS["python"].tree_children(rows, tol)
        b = BACKENDS["cython"].tree_children(rows, tol)
        assert a.tobytes() == b.tobytes()


@needs_compiled
@pytest.mark.parametrize("n", [2, 3, 4, 5, 8])
def test_counts_and_codes_identical(n):
    rows = _tree_rows(n, 8, seed=n)
    for name in ("cluster_counts", "composition_codes"):
        a = getattr(BACKENDS["python"], name)(rows)
        b = getattr(BACKENDS["cython"], name)(rows)
        np.testing.assert_array_equal(a, b)


@needs_compiled
@pytest.mark.parametrize("n", [1, 5, 64, 65, 130])
def test_sign_masks_identical(n):
    rng = np.random.default_rng(n)
    proj = rng.standard_normal((300, n))
    proj[7, 0] = 0.0
    ka, va = BACKENDS["python"].sign_masks(proj)
    kb, vb = BACKENDS["cython"].sign_masks(proj)
    np.testing.assert_array_equal(ka, kb)
    np.testing.assert_array_equal(va, vb)
    assert not va[7] and va.sum() == 299


def test_sign_mask_bits():
    keys, valid = BACKENDS["python"].sign_masks(np.array([[1.0, -1.0, 2.0]]))
    assert keys[0, 0] == 0b101 and valid[0]
