import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from netflat import _kernels, families
from netflat.compressed import SpectralModel, WeightPlan
from netflat.validate import random_flat

needs_numba = pytest.mark.skipif(not _kernels.HAS_NUMBA, reason="numba not installed")


def _run_both(fn, *args):
    out = {}
    for b in ("numpy", "numba"):
        prev = _kernels.set_backend(b)
        try:
            out[b] = fn(*args)
        finally:
            _kernels.set_backend(prev)
    return out["numpy"], out["numba"]


@needs_numba
@given(st.sampled_from(["ray:unit", "spider:3", "fixture10", "lattice2d:3"]), st.integers(0, 2**32 - 1),
       st.integers(1, 12), st.floats(0.01, 1.0), st.integers(1, 3))
def test_taylor_parity(name, seed, k, tau, d):
    g = families.from_shorthand(name)
    f = random_flat(g, np.random.default_rng(seed), dimension=d)
    H = tuple(h + k for h in f.horizons)
    fe = f.expand(H)
    reg = fe.region
    support = max(f.horizons, default=-1)
    limits = np.array([reg.rows_through_depth(support + j) for j in range(1, k + 1)], dtype=np.int64)
    args = (reg.indptr, reg.indices, reg.cond, reg.rowidx, reg.inv_mu, fe.extended(), tau, limits)
    a, b = _run_both(_kernels.taylor_apply, *args)
    assert np.allclose(a, b, rtol=1e-13, atol=1e-15)


def test_taylor_matches_dense_series(fixture10):
    from oracles import dense_laplacian
    from scipy.linalg import expm

    reg = fixture10.region(())
    A = dense_laplacian(10, families.FIXTURE10_EDGES, families.FIXTURE10_MU)
    x = np.random.default_rng(0).normal(size=(10, 1))
    limits = np.full(40, reg.n, dtype=np.int64)
    # row order of the region is the core order
    out = _kernels.taylor_apply(reg.indptr, reg.indices, reg.cond, reg.rowidx, reg.inv_mu, x, 0.3, limits)
    assert np.allclose(out, expm(-0.3 * A) @ x, atol=1e-14)


def _random_mmatrix(rng, n, graded=False):
    W = rng.uniform(0, 1, (n, n)) * (rng.random((n, n)) < 0.4)
    W = np.triu(W, 1)
    # a chain keeps K irreducible, so g[0] > 0 makes it nonsingular
    idx = np.arange(n - 1)
    W[idx, idx + 1] += rng.uniform(0.1, 1, n - 1)
    W = W + W.T
    g = rng.uniform(0, 1, n) * (rng.random(n) < 0.5)
    g[0] = 1.0
    if graded:
        s = 2.0 ** -np.arange(n)
        W = W * np.minimum.outer(s, s)
    return W, g


@needs_numba
@given(st.integers(0, 2**32 - 1), st.integers(1, 30))
def test_mmatrix_parity(seed, n):
    W, g = _random_mmatrix(np.random.default_rng(seed), n)
    (a, pa), (b, pb) = _run_both(_kernels.mmatrix_inverse, W, g)
    assert np.allclose(a, b, rtol=1e-12, atol=0)
    assert np.allclose(pa, pb, rtol=1e-12, atol=0)


@given(st.integers(0, 2**32 - 1), st.integers(1, 25))
def test_mmatrix_inverse_is_inverse(seed, n):
    W, g = _random_mmatrix(np.random.default_rng(seed), n)
    K = np.diag(g + W.sum(axis=1)) - W
    H, piv = _kernels.mmatrix_inverse(W, g)
    assert np.all(piv > 0)
    assert np.allclose(H @ K, np.eye(n), atol=1e-9 * np.linalg.cond(K))


def test_graded_inverse_is_entrywise_accurate():
    from mpmath import mp, matrix

    W, g = _random_mmatrix(np.random.default_rng(7), 40, graded=True)
    K = np.diag(g + W.sum(axis=1)) - W
    H, _ = _kernels.mmatrix_inverse(W, g)
    mp.dps = 60
    ref = matrix(K.tolist()) ** -1
    ref = np.array([[float(ref[i, j]) for j in range(40)] for i in range(40)])
    assert np.max(np.abs(H - ref) / np.abs(ref)) < 1e-10


@needs_numba
def test_spectral_models_agree_across_backends():
    g = WeightPlan(0.5).apply(families.ray_unit())
    a, b = _run_both(lambda: SpectralModel(g, (0,), 48).eigenvalues)
    assert np.allclose(a, b, rtol=1e-10)


def test_set_backend_validates():
    with pytest.raises(ValueError):
        _kernels.set_backend("fortran")


@pytest.mark.parametrize("flag, expect", [("1", "numpy"), ("", "numba" if _kernels.HAS_NUMBA else "numpy")])
def test_env_flag_selects_backend(flag, expect):
    env = dict(os.environ, NETFLAT_DISABLE_NUMBA=flag)
    out = subprocess.run([sys.executable, "-c", "import netflat; print(netflat.get_backend())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == expect
