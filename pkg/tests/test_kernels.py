import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dopfocus import _kernels as k

needs_numba = pytest.mark.skipif(not k.USE_NUMBA, reason="numba disabled")


def _omp_inputs(seed, K=12, N=40, B=7):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((K, N)) + 1j * rng.standard_normal((K, N))
    Y = rng.standard_normal((B, K)) + 1j * rng.standard_normal((B, K))
    Y[0] = 0.0  # all-zero row
    Y[1] = 2.0 * A[:, 3] - 1j * A[:, 9]  # exactly 2-sparse
    return A, Y


def _check_same(a, b):
    assert np.array_equal(a[0], b[0])  # support
    assert np.array_equal(a[2], b[2])  # n_selected
    for x, y in zip(a[1:], b[1:]):
        assert np.allclose(x, y, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("order,tol", [(1, 0.0), (4, 0.0), (4, 1e-8), (12, 0.0)])
def test_omp_loops_match_numpy(order, tol):
    A, Y = _omp_inputs(order)
    _check_same(k._omp_batch_numpy(A, Y, order, tol), k._omp_batch_loops(A, Y, order, tol))


@needs_numba
@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), order=st.integers(1, 6))
def test_omp_jit_matches_numpy(seed, order):
    A, Y = _omp_inputs(seed)
    _check_same(k._omp_batch_numpy(A, Y, order, 0.0), k._omp_batch_jit(A, Y, order, 0.0))


def test_omp_tol_stops_exact_rows():
    A, Y = _omp_inputs(0)
    sup, coefs, n_sel, energy, resid = k.omp_batch(A, Y, 5, 1e-8)
    assert n_sel[0] == 0 and n_sel[1] == 2
    assert set(sup[1, :2]) == {3, 9}
    assert np.allclose(coefs[1, :2][np.argsort(sup[1, :2])], [2.0, -1j])


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000), L=st.integers(0, 6))
def test_scatter_sum_paths_agree(seed, L):
    rng = np.random.default_rng(seed)
    args = (rng.uniform(0, 1e-5, L), rng.uniform(-3e5, 3e5, L),
            rng.standard_normal(L) + 1j * rng.standard_normal(L), np.arange(-5, 6).astype(float), 9, 1e-5)
    ref = k._scatter_sum_numpy(*args)
    assert np.allclose(k._scatter_sum_loops(*args), ref, atol=1e-12)
    if k.USE_NUMBA:
        assert np.allclose(k._scatter_sum_jit(*args), ref, atol=1e-12)


def test_env_flag_selects_numpy():
    env = dict(os.environ, DOPFOCUS_NUMBA="0")
    out = subprocess.run([sys.executable, "-c", "from dopfocus import _kernels as k; print(k.USE_NUMBA)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"
