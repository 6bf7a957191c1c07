"""Gaussian-process surrogate over latent goodness values.

The model is a zero-mean GP with an ARD Matern 5/2 kernel, conditioned on
MAP latent values at the observed points. Hyperparameter priors (used by the
log posterior): log signal_variance ~ N(0, 1), log length_scales ~
N(log 0.2, 1); noise_variance is held fixed during fitting.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from . import backend
from .errors import InvalidInputError, NumericalError

JITTER_FLOOR = 1e-8
PRIOR_LOG_LS_MEAN = np.log(0.2)

# Diagnostics: number of times a predicted variance had to be clamped to 0.
VARIANCE_CLAMP_COUNT = 0


def _as_points(x, dim=None):
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise InvalidInputError(f"expected point array, got shape {arr.shape}")
    if dim is not None and arr.shape[1] != dim:
        raise InvalidInputError(f"dimension mismatch: expected {dim}, got {arr.shape[1]}")
    return arr


@dataclass(frozen=True)
class KernelHyperparams:
    signal_variance: float
    length_scales: np.ndarray
    noise_variance: float = 1e-6

    def __post_init__(self):
        ls = np.ascontiguousarray(self.length_scales, dtype=np.float64)
        object.__setattr__(self, "length_scales", ls)
        if not (np.isfinite(self.signal_variance) and self.signal_variance > 0):
            raise InvalidInputError("signal_variance must be strictly positive")
        if ls.ndim != 1 or ls.size == 0 or not np.all(np.isfinite(ls) & (ls > 0)):
            raise InvalidInputError("length_scales must be strictly positive reals")
        if not (np.isfinite(self.noise_variance) and self.noise_variance > 0):
            raise InvalidInputError("noise_variance must be strictly positive")

    @property
    def dimension(self):
        return self.length_scales.size

    @property
    def effective_noise(self):
        return max(float(self.noise_variance), JITTER_FLOOR)

    @property
    def inv_length_scales(self):
        return 1.0 / self.length_scales


@dataclass(frozen=True)
class LatentGoodness:
    values: np.ndarray

    def __post_init__(self):
        vals = np.ascontiguousarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", vals)
        if vals.ndim != 1:
            raise InvalidInputError("latent values must be a vector")
        if not np.all(np.isfinite(vals)):
            raise InvalidInputError("latent values must all be finite")


def kernel_eval(a, b, h):
    """Matern 5/2 kernel value between two points (no noise term)."""
    a = np.ascontiguousarray(a, dtype=np.float64).reshape(-1)
    b = np.ascontiguousarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape or a.size != h.dimension:
        raise InvalidInputError(
            f"dimension mismatch: a has {a.size}, b has {b.size}, kernel expects {h.dimension}"
        )
    k = backend.cross_kernel(a[None, :], b[None, :], h.inv_length_scales, h.signal_variance)
    return float(k[0, 0])


def _cholesky_with_escalation(k_nl, noise):
    """Cholesky of K + noise*I, escalating jitter up to 3 times on failure."""
    jitter = noise
    n = k_nl.shape[0]
    for attempt in range(4):
        try:
            return np.linalg.cholesky(k_nl + jitter * np.eye(n)), jitter
        except np.linalg.LinAlgError:
            if attempt == 3:
                break
            jitter *= 10.0
    raise NumericalError("Gram matrix not positive definite after jitter escalation", term="gram_cholesky")


class PreferenceGP:
    """Frozen preference surrogate: hyperparameters + latent values at points.

    Instances are immutable after construction and safe to share across
    threads; posterior factors are computed once.
    """

    def __init__(self, hyperparams, observed_points, latent, dataset_ref="", fit_status="ok"):
        points = _as_points(observed_points, dim=hyperparams.dimension)
        if isinstance(latent, LatentGoodness):
            latent_values = latent.values
        else:
            latent_values = LatentGoodness(np.asarray(latent)).values
        if latent_values.size != points.shape[0]:
            raise InvalidInputError(
                f"latent length {latent_values.size} != number of points {points.shape[0]}"
            )
        if points.shape[0] == 0:
            raise InvalidInputError("PreferenceGP needs at least one observation")
        if np.unique(points, axis=0).shape[0] != points.shape[0]:
            raise InvalidInputError("observed points must be pairwise distinct")
        self.hyperparams = hyperparams
        self.observed_points = points
        self.latent = LatentGoodness(latent_values)
        self.dataset_ref = dataset_ref
        self.fit_status = fit_status

        k_nl = backend.cross_kernel(points, points, hyperparams.inv_length_scales, hyperparams.signal_variance)
        self._chol, self._jitter = _cholesky_with_escalation(k_nl, hyperparams.effective_noise)
        self._alpha = sla.cho_solve((self._chol, True), latent_values, check_finite=False)
        self._train_means = k_nl @ self._alpha
        self.best_observed_mean = float(self._train_means.max())
        self.best_observed_point = points[int(np.argmax(self._train_means))].copy()

    @property
    def dimension(self):
        return self.hyperparams.dimension

    @property
    def n_observations(self):
        return self.observed_points.shape[0]

    def predict_mean(self, x, fast=False):
        """Posterior mean at a batch of points (1D input -> scalar)."""
        scalar = np.asarray(x).ndim == 1
        pts = _as_points(x, dim=self.dimension)
        kern = backend.cross_kernel_fast if fast else backend.cross_kernel
        kx = kern(pts, self.observed_points, self.hyperparams.inv_length_scales, self.hyperparams.signal_variance)
        mean = kx @ self._alpha
        return float(mean[0]) if scalar else mean

    def predict(self, x, fast=False):
        """Posterior (mean, variance) at a batch of points (1D -> scalars)."""
        global VARIANCE_CLAMP_COUNT
        scalar = np.asarray(x).ndim == 1
        pts = _as_points(x, dim=self.dimension)
        kern = backend.cross_kernel_fast if fast else backend.cross_kernel
        kx = kern(pts, self.observed_points, self.hyperparams.inv_length_scales, self.hyperparams.signal_variance)
        mean = kx @ self._alpha
        v = sla.solve_triangular(self._chol, kx.T, lower=True, check_finite=False)
        var = self.hyperparams.signal_variance - np.einsum("ij,ij->j", v, v)
        neg = var < 0.0
        if np.any(neg):
            VARIANCE_CLAMP_COUNT += int(neg.sum())
            var = np.where(neg, 0.0, var)
        if scalar:
            return float(mean[0]), float(var[0])
        return mean, var


def posterior_predict(gp, x):
    """(mean, variance) of the latent goodness at x."""
    return gp.predict(x)


class LogPosterior:
    """Joint log posterior of (latent values, log hyperparams) for a dataset.

    Variable vector layout: [g_0..g_{n-1}, log signal_variance,
    log length_scale_0..log length_scale_{d-1}]; noise is fixed. The BTL
    likelihood uses one multinomial term per selection event.

    ``whitened=True`` evaluates the posterior in the non-centered
    parameterization (latent = chol(K) @ white noise), which differs from the
    centered density exactly by the log|K| Jacobian. Fitting uses this form:
    the centered joint mode is degenerate (log|K| rewards collapsing the Gram
    spectrum onto the noise floor, flattening the model), while the whitened
    mode keeps latent inference identical for fixed hyperparameters and
    selects hyperparameters without that incentive.
    """

    def __init__(self, dataset, noise_variance=1e-6, whitened=False):
        self.whitened = whitened
        self.dataset = dataset
        self.noise = max(float(noise_variance), JITTER_FLOOR)
        self.points, self.event_slots = dataset.distinct_points()
        self.n = self.points.shape[0]
        self.d = dataset.dimension
        # Padded (events x max_slots) latent-index matrix; chosen slot first.
        # Padded cells point at index 0 but are masked out of every sum.
        if self.event_slots:
            mmax = max(len(s) for s in self.event_slots)
            self._idx = np.zeros((len(self.event_slots), mmax), dtype=np.intp)
            self._mask = np.zeros((len(self.event_slots), mmax), dtype=bool)
            for e, s in enumerate(self.event_slots):
                self._idx[e, : len(s)] = s
                self._mask[e, : len(s)] = True
        else:
            self._idx = np.zeros((0, 0), dtype=np.intp)
            self._mask = np.zeros((0, 0), dtype=bool)

    @property
    def n_variables(self):
        return self.n + 1 + self.d

    def split(self, z):
        g = z[: self.n]
        log_sv = z[self.n]
        log_ls = z[self.n + 1 :]
        return g, log_sv, log_ls

    def pack(self, g, log_sv, log_ls):
        return np.concatenate([g, [log_sv], log_ls])

    def _btl_probs(self, g):
        """Per-event softmax over candidate slots (padded cells -> 0)."""
        vals = np.where(self._mask, g[self._idx], -np.inf)
        m = vals.max(axis=1)
        ex = np.exp(vals - m[:, None])
        denom = ex.sum(axis=1)
        return ex / denom[:, None], vals[:, 0] - (m + np.log(denom))

    def _btl_value(self, g):
        if not self.event_slots:
            return 0.0
        _, logp = self._btl_probs(g)
        return float(logp.sum())

    def _btl_value_grad(self, g):
        if not self.event_slots:
            return 0.0, np.zeros(self.n)
        p, logp = self._btl_probs(g)
        grad = np.zeros(self.n)
        np.add.at(grad, self._idx.reshape(-1), -p.reshape(-1))
        np.add.at(grad, self._idx[:, 0], 1.0)
        return float(logp.sum()), grad

    def _btl_hessian(self, g):
        """Negative Hessian of the BTL log likelihood (positive semidefinite)."""
        h = np.zeros((self.n, self.n))
        if not self.event_slots:
            return h
        p, _ = self._btl_probs(g)
        e, m = p.shape
        blocks = -p[:, :, None] * p[:, None, :]
        diag = np.arange(m)
        blocks[:, diag, diag] += p
        rows = np.broadcast_to(self._idx[:, :, None], (e, m, m)).reshape(-1)
        cols = np.broadcast_to(self._idx[:, None, :], (e, m, m)).reshape(-1)
        np.add.at(h, (rows, cols), blocks.reshape(-1))
        return h

    def value_and_grad(self, z):
        g, log_sv, log_ls = self.split(z)
        sv = np.exp(log_sv)
        ls = np.exp(log_ls)
        n = self.n

        lik, grad_g = self._btl_value_grad(g)

        if n > 0:
            k_nl, dfac = backend.kernel_and_dfac(self.points, 1.0 / ls, sv)
            k = k_nl + self.noise * np.eye(n)
            try:
                chol = np.linalg.cholesky(k)
            except np.linalg.LinAlgError:
                chol, _ = _cholesky_with_escalation(k_nl, self.noise)
            alpha = sla.cho_solve((chol, True), g, check_finite=False)
            lp_g = -0.5 * float(g @ alpha) - 0.5 * n * np.log(2.0 * np.pi)
            grad_g = grad_g - alpha

            if self.whitened:
                w = 0.5 * np.outer(alpha, alpha)
            else:
                lp_g -= np.log(np.diag(chol)).sum()
                kinv = sla.lapack.dpotri(chol, lower=1)[0]
                kinv = kinv + np.tril(kinv, -1).T
                w = 0.5 * (np.outer(alpha, alpha) - kinv)
            grad_log_sv = float((w * k_nl).sum())
            grad_log_ls = backend.lengthscale_grads(w * dfac, self.points, 1.0 / ls)
        else:
            lp_g = 0.0
            grad_log_sv = 0.0
            grad_log_ls = np.zeros(self.d)

        lp_h = -0.5 * log_sv**2 - 0.5 * np.log(2.0 * np.pi)
        lp_h += float(-0.5 * ((log_ls - PRIOR_LOG_LS_MEAN) ** 2).sum() - 0.5 * self.d * np.log(2.0 * np.pi))
        grad_log_sv += -log_sv
        grad_log_ls = grad_log_ls - (log_ls - PRIOR_LOG_LS_MEAN)

        value = lik + lp_g + lp_h
        grad = self.pack(grad_g, grad_log_sv, grad_log_ls)
        if not np.isfinite(value):
            raise NumericalError("non-finite log posterior", term="value")
        if not np.all(np.isfinite(grad)):
            raise NumericalError("non-finite log posterior gradient", term="gradient")
        return value, grad


def log_posterior_and_grad(dataset, h, latent):
    """Log p(D|g) + log p(g|theta) + log p(theta) and its gradient.

    The gradient is with respect to (latent values, log signal_variance,
    log length_scales), in that order; noise_variance is treated as fixed.
    """
    if isinstance(latent, LatentGoodness):
        g = latent.values
    else:
        g = LatentGoodness(np.asarray(latent)).values
    lp = LogPosterior(dataset, noise_variance=h.noise_variance)
    if g.size != lp.n:
        raise InvalidInputError(f"latent length {g.size} != distinct points {lp.n}")
    if h.dimension != dataset.dimension:
        raise InvalidInputError("hyperparameter dimension mismatch with dataset")
    z = lp.pack(g, np.log(h.signal_variance), np.log(h.length_scales))
    return lp.value_and_grad(z)
