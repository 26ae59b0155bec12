"""Hot loops: truncated Taylor action of the Laplacian and the accurate
M-matrix inverse used by the spectral models.

Both kernels exist twice, once under numba ``@njit`` and once in plain numpy.
The numpy path is used when numba is missing or when the environment
variable ``NETFLAT_DISABLE_NUMBA`` is set to a non-empty value other than
``0``. ``set_backend`` switches at runtime (tests and benchmarks use it).
"""
import os

import numpy as np

try:
    import numba
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


def _env_disabled():
    flag = os.environ.get("NETFLAT_DISABLE_NUMBA", "")
    return flag not in ("", "0")


_state = {"backend": "numba" if HAS_NUMBA and not _env_disabled() else "numpy"}


def get_backend():
    return _state["backend"]


def set_backend(name):
    """Select ``"numba"`` or ``"numpy"``; returns the previous backend."""
    if name not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAS_NUMBA:
        raise RuntimeError("numba is not installed")
    prev = _state["backend"]
    _state["backend"] = name
    return prev


# ---------------------------------------------------------------------------
# Taylor series of exp(-tau * Delta) applied to a block of vectors.
#
# Rows 0..n-1 are explicit vertices, rows n..n+T-1 hold tail constants (the
# value of every vertex beyond a tail's horizon). Column indices point into
# the extended array. Delta is evaluated in difference form so constants are
# annihilated exactly. Term j only touches rows < row_limits[j-1]; all other
# rows of that term are exactly zero by support growth.


def _taylor_numpy(indptr, indices, cond, rowidx, inv_mu, x_ext, tau, row_limits):
    n = inv_mu.shape[0]
    d = x_ext.shape[1]
    acc = x_ext[:n].copy()
    term = x_ext.copy()
    for j in range(row_limits.shape[0]):
        r = int(row_limits[j])
        e = int(indptr[r])
        contrib = cond[:e, None] * (term[rowidx[:e]] - term[indices[:e]])
        new = np.zeros_like(term)
        for c in range(d):
            new[:r, c] = np.bincount(rowidx[:e], weights=contrib[:, c], minlength=r)
        new[:r] *= inv_mu[:r, None]
        new[:r] *= -tau / (j + 1)
        acc[:r] += new[:r]
        term = new
    return acc


@njit(cache=True)
def _taylor_numba(indptr, indices, cond, rowidx, inv_mu, x_ext, tau, row_limits):
    n = inv_mu.shape[0]
    m = x_ext.shape[0]
    d = x_ext.shape[1]
    acc = x_ext[:n].copy()
    term = x_ext.copy()
    new = np.zeros((m, d))
    for j in range(row_limits.shape[0]):
        r = row_limits[j]
        scale = -tau / (j + 1)
        for i in range(r):
            for c in range(d):
                s = 0.0
                for e in range(indptr[i], indptr[i + 1]):
                    s += cond[e] * (term[i, c] - term[indices[e], c])
                new[i, c] = (s * inv_mu[i]) * scale
        for i in range(r):
            for c in range(d):
                acc[i, c] += new[i, c]
        # swap: rows >= r of new are zero; term rows >= r must be zero too
        for i in range(m):
            for c in range(d):
                if i < r:
                    term[i, c] = new[i, c]
                else:
                    term[i, c] = 0.0
    return acc


def taylor_apply(indptr, indices, cond, rowidx, inv_mu, x_ext, tau, row_limits):
    """Return sum_{j<=k} (-tau Delta)^j x / j! on the explicit rows.

    ``row_limits`` has length k and must be non-decreasing.
    """
    x_ext = np.ascontiguousarray(x_ext, dtype=np.float64)
    row_limits = np.ascontiguousarray(row_limits, dtype=np.int64)
    if _state["backend"] == "numba":
        return _taylor_numba(indptr, indices, cond, rowidx, inv_mu, x_ext, float(tau), row_limits)
    return _taylor_numpy(indptr, indices, cond, rowidx, inv_mu, x_ext, float(tau), row_limits)


# ---------------------------------------------------------------------------
# Inverse of K = diag(g + rowsum(W)) - W for W >= 0 with zero diagonal and
# g >= 0 (a diagonally dominant M-matrix). Elimination keeps every quantity a
# sum of nonnegative terms, so small pivots of graded matrices are computed to
# full relative accuracy (GTH-style). Returns (X, Y) with K^{-1} = Y @ X.


def _mm_numpy(W, g):
    n = g.shape[0]
    W = W.copy()
    g = g.copy()
    p = np.zeros(n)
    lower = np.zeros((n, n))
    upper = np.zeros((n, n))
    for k in range(n):
        p[k] = g[k] + W[k, k + 1:].sum()
        l = W[k + 1:, k] / p[k]
        g[k + 1:] += l * g[k]
        W[k + 1:, k + 1:] += np.outer(l, W[k, k + 1:])
        idx = np.arange(k + 1, n)
        W[idx, idx] = 0.0
        lower[k + 1:, k] = l
        upper[k, k + 1:] = W[k, k + 1:]
    X = np.eye(n)
    for i in range(1, n):
        X[i, :i] = lower[i, :i] @ X[:i, :i]
    Y = np.zeros((n, n))
    for i in range(n - 1, -1, -1):
        Y[i, i] = 1.0 / p[i]
        Y[i, i + 1:] = (upper[i, i + 1:] @ Y[i + 1:, i + 1:]) / p[i]
    return X, Y, p


@njit(cache=True)
def _mm_numba(W, g):
    n = g.shape[0]
    W = W.copy()
    g = g.copy()
    p = np.zeros(n)
    for k in range(n):
        s = g[k]
        for j in range(k + 1, n):
            s += W[k, j]
        p[k] = s
        for i in range(k + 1, n):
            l = W[i, k] / s
            W[i, k] = l
            g[i] += l * g[k]
            if l != 0.0:
                for j in range(k + 1, n):
                    if j != i:
                        W[i, j] += l * W[k, j]
    # W now holds multipliers below the diagonal and U's off-diagonal above
    X = np.eye(n)
    for i in range(1, n):
        for j in range(i):
            s = 0.0
            for q in range(j, i):
                s += W[i, q] * X[q, j]
            X[i, j] = s
    Y = np.zeros((n, n))
    for i in range(n - 1, -1, -1):
        Y[i, i] = 1.0 / p[i]
        for j in range(i + 1, n):
            s = 0.0
            for q in range(i + 1, j + 1):
                s += W[i, q] * Y[q, j]
            Y[i, j] = s / p[i]
    return X, Y, p


def mmatrix_inverse(W, g):
    """Accurate inverse of diag(g + W.sum(1)) - W. Returns (inverse, pivots)."""
    W = np.ascontiguousarray(W, dtype=np.float64)
    g = np.ascontiguousarray(g, dtype=np.float64)
    if W.shape[0] == 0:
        return np.zeros((0, 0)), np.zeros(0)
    if _state["backend"] == "numba":
        X, Y, p = _mm_numba(W, g)
    else:
        X, Y, p = _mm_numpy(W, g)
    return Y @ X, p
