"""NumPy implementation of the hot numerical kernels.

This is the fallback backend; `prefopt._core` (compiled) provides the same
functions with fused loops. Distances use the gram-expansion trick so the
heavy lifting stays inside BLAS.
"""

import numpy as np

BACKEND_NAME = "numpy"

_SQRT5 = np.sqrt(5.0)


def _scaled_sq_dists(x1, x2, inv_ls):
    z1 = x1 * inv_ls
    z2 = x2 * inv_ls
    sq = (z1 * z1).sum(axis=1)[:, None] + (z2 * z2).sum(axis=1)[None, :]
    sq -= 2.0 * (z1 @ z2.T)
    np.maximum(sq, 0.0, out=sq)
    return sq


def cross_kernel(x1, x2, inv_ls, signal_var):
    """Exact ARD Matern 5/2 cross-kernel matrix, shape (len(x1), len(x2))."""
    t = _scaled_sq_dists(x1, x2, inv_ls)
    np.sqrt(t, out=t)
    t *= _SQRT5
    return signal_var * (1.0 + t + t * t / 3.0) * np.exp(-t)


def cross_kernel_fast(x1, x2, inv_ls, signal_var):
    """Speed-optimized cross-kernel for acquisition search.

    The exponential runs in float32 (SIMD path), everything else in float64;
    relative error is ~1e-7, well below what candidate ranking needs.
    """
    t = _scaled_sq_dists(x1, x2, inv_ls)
    np.sqrt(t, out=t)
    t *= _SQRT5
    e = np.exp(-(t.astype(np.float32)))
    out = 1.0 + t + t * t / 3.0
    out *= e
    out *= signal_var
    return out


def kernel_and_dfac(x, inv_ls, signal_var):
    """Gram pieces for fitting: noiseless K and the length-scale factor.

    Returns (K, dfac) where K[i,j] = s*(1+t+t^2/3)exp(-t), t = sqrt(5)*r_ij,
    and dfac[i,j] = s*(5/3)*(1+t)*exp(-t); the gradient of K w.r.t.
    log length_scale_m is dfac * D_m with D_m the per-dimension scaled
    squared differences.
    """
    t = _scaled_sq_dists(x, x, inv_ls)
    np.sqrt(t, out=t)
    t *= _SQRT5
    e = np.exp(-t)
    one_t = 1.0 + t
    k = signal_var * (one_t + t * t / 3.0) * e
    dfac = (signal_var * (5.0 / 3.0)) * one_t * e
    return k, dfac


def lengthscale_grads(w, x, inv_ls):
    """sum_ij W_ij * (x_i,m - x_j,m)^2 * inv_ls_m^2 for every dimension m.

    W must be symmetric. Uses W's row sums plus one GEMM instead of per-
    dimension difference matrices.
    """
    z = x * inv_ls
    rowsum = w.sum(axis=1)
    t1 = rowsum @ (z * z)
    t2 = np.einsum("ij,ij->j", z, w @ z)
    return 2.0 * (t1 - t2)
