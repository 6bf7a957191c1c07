# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled implementation of the hot numerical kernels.

Fused single-pass loops over the cross-kernel matrices; the NumPy backend
(`prefopt._core_np`) is the behavioral reference. Selected automatically at
import by `prefopt.backend` when built.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, sqrt

cnp.import_array()

from . import _core_np

BACKEND_NAME = "compiled"

cdef double SQRT5 = sqrt(5.0)


cdef void _cross_into(
    const double[:, ::1] z1,
    const double[:, ::1] z2,
    double signal_var,
    double[:, ::1] out,
) noexcept nogil:
    cdef Py_ssize_t n1 = z1.shape[0], n2 = z2.shape[0], d = z1.shape[1]
    cdef Py_ssize_t i, j, m
    cdef double acc, diff, t
    for i in range(n1):
        for j in range(n2):
            acc = 0.0
            for m in range(d):
                diff = z1[i, m] - z2[j, m]
                acc += diff * diff
            t = SQRT5 * sqrt(acc)
            out[i, j] = signal_var * (1.0 + t + t * t / 3.0) * exp(-t)


def _scaled(x, inv_ls):
    return np.ascontiguousarray(np.asarray(x, dtype=np.float64) * inv_ls)


def cross_kernel(x1, x2, inv_ls, signal_var):
    """Exact ARD Matern 5/2 cross-kernel matrix, shape (len(x1), len(x2))."""
    z1 = _scaled(x1, inv_ls)
    z2 = _scaled(x2, inv_ls)
    out = np.empty((z1.shape[0], z2.shape[0]), dtype=np.float64)
    _cross_into(z1, z2, float(signal_var), out)
    return out


def cross_kernel_fast(x1, x2, inv_ls, signal_var):
    """Same fused loop; compiled exp is already the fast path."""
    return cross_kernel(x1, x2, inv_ls, signal_var)


def kernel_and_dfac(x, inv_ls, signal_var):
    """Gram pieces for fitting: noiseless K and the length-scale factor."""
    cdef double[:, ::1] z = _scaled(x, inv_ls)
    cdef Py_ssize_t n = z.shape[0], d = z.shape[1]
    k_arr = np.empty((n, n), dtype=np.float64)
    dfac_arr = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] k = k_arr
    cdef double[:, ::1] dfac = dfac_arr
    cdef double sv = float(signal_var)
    cdef double coef = sv * (5.0 / 3.0)
    cdef Py_ssize_t i, j, m
    cdef double acc, diff, t, e, one_t
    with nogil:
        for i in range(n):
            k[i, i] = sv
            dfac[i, i] = coef
            for j in range(i + 1, n):
                acc = 0.0
                for m in range(d):
                    diff = z[i, m] - z[j, m]
                    acc += diff * diff
                t = SQRT5 * sqrt(acc)
                e = exp(-t)
                one_t = 1.0 + t
                k[i, j] = sv * (one_t + t * t / 3.0) * e
                k[j, i] = k[i, j]
                dfac[i, j] = coef * one_t * e
                dfac[j, i] = dfac[i, j]
    return k_arr, dfac_arr


# BLAS-bound; the NumPy formulation is already optimal.
lengthscale_grads = _core_np.lengthscale_grads
