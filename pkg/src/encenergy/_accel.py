"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Set ``ENCENERGY_DISABLE_NUMBA=1`` to force the numpy implementations (for
debugging or platforms without numba). Both paths are always importable as
``*_numpy`` / ``*_numba`` so tests and the benchmark can compare them.
"""
import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is an optional extra
    HAVE_NUMBA = False

_DISABLED = os.environ.get("ENCENERGY_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}
USE_NUMBA = HAVE_NUMBA and not _DISABLED


# -- numpy --------------------------------------------------------------------

def _sq_dist_numpy(A, B):
    # accumulate one feature at a time, same order as the compiled loops, so a
    # constant column adds exact zeros and both backends agree bitwise
    S = np.zeros((A.shape[0], B.shape[0]))
    for k in range(A.shape[1]):
        v = A[:, k, None] - B[None, :, k]
        S += v * v
    return S


def pairwise_distances_numpy(X):
    D = np.sqrt(_sq_dist_numpy(X, X))
    # mirror the upper triangle so symmetry holds bitwise
    iu = np.triu_indices(X.shape[0], 1)
    D.T[iu] = D[iu]
    np.fill_diagonal(D, 0.0)
    return D


def cross_distances_numpy(A, B):
    return np.sqrt(_sq_dist_numpy(A, B))


def exp_kernel_numpy(D, sigma_f2, length_scale, sigma_n2):
    K = sigma_f2 * np.exp(-D / length_scale)
    iu = np.triu_indices(D.shape[0], 1)
    K.T[iu] = K[iu]
    np.fill_diagonal(K, sigma_f2 + sigma_n2)
    return K


def trapezoid_numpy(t, p):
    return float(np.sum(0.5 * (p[1:] + p[:-1]) * np.diff(t)))


# -- numba --------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def pairwise_distances_numba(X):
        n, d = X.shape
        D = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                s = 0.0
                for k in range(d):
                    v = X[i, k] - X[j, k]
                    s += v * v
                D[i, j] = np.sqrt(s)
                D[j, i] = D[i, j]
        return D

    @njit(cache=True)
    def cross_distances_numba(A, B):
        n, d = A.shape
        m = B.shape[0]
        D = np.empty((n, m))
        for i in range(n):
            for j in range(m):
                s = 0.0
                for k in range(d):
                    v = A[i, k] - B[j, k]
                    s += v * v
                D[i, j] = np.sqrt(s)
        return D

    @njit(cache=True)
    def exp_kernel_numba(D, sigma_f2, length_scale, sigma_n2):
        n = D.shape[0]
        K = np.empty((n, n))
        for i in range(n):
            K[i, i] = sigma_f2 + sigma_n2
            for j in range(i + 1, n):
                K[i, j] = sigma_f2 * np.exp(-D[i, j] / length_scale)
                K[j, i] = K[i, j]
        return K

    @njit(cache=True)
    def trapezoid_numba(t, p):
        s = 0.0
        for i in range(t.shape[0] - 1):
            s += 0.5 * (p[i + 1] + p[i]) * (t[i + 1] - t[i])
        return s

else:  # pragma: no cover
    pairwise_distances_numba = pairwise_distances_numpy
    cross_distances_numba = cross_distances_numpy
    exp_kernel_numba = exp_kernel_numpy
    trapezoid_numba = trapezoid_numpy


if USE_NUMBA:
    pairwise_distances = pairwise_distances_numba
    cross_distances = cross_distances_numba
    exp_kernel = exp_kernel_numba
    trapezoid = trapezoid_numba
else:
    pairwise_distances = pairwise_distances_numpy
    cross_distances = cross_distances_numpy
    exp_kernel = exp_kernel_numpy
    trapezoid = trapezoid_numpy


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
