"""Selection feedback and MAP fitting of preference surrogates.

A gallery selection is one multinomial BTL observation: the chosen point
preferred over the full rejected set. Fitting maximizes the joint posterior
over (latent goodness values, log kernel hyperparameters) with L-BFGS-B.
"""

import hashlib
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize

from . import backend
from ._seeding import rng_for
from .errors import InvalidInputError, NumericalError
from .gp import (
    PRIOR_LOG_LS_MEAN,
    KernelHyperparams,
    LatentGoodness,
    LogPosterior,
    PreferenceGP,
    _cholesky_with_escalation,
)

LOG_HYPER_BOUND = 10.0


def _point_array(x, name):
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite coordinates")
    if np.any(arr < 0.0) or np.any(arr > 1.0):
        raise InvalidInputError(f"{name} must lie in the unit hypercube")
    return arr


@dataclass(frozen=True)
class SelectionEvent:
    chosen: np.ndarray
    rejected: np.ndarray
    iteration_index: int

    def __post_init__(self):
        chosen = _point_array(self.chosen, "chosen").reshape(-1)
        rejected = _point_array(self.rejected, "rejected")
        if rejected.ndim == 1:
            rejected = rejected[None, :]
        if rejected.shape[0] == 0:
            raise InvalidInputError("rejected set must be non-empty")
        if rejected.shape[1] != chosen.size:
            raise InvalidInputError("chosen and rejected dimensions differ")
        if any(np.array_equal(chosen, r) for r in rejected):
            raise InvalidInputError("chosen point must not appear in the rejected set")
        if self.iteration_index < 1:
            raise InvalidInputError("iteration_index must be >= 1")
        object.__setattr__(self, "chosen", chosen)
        object.__setattr__(self, "rejected", rejected)

    @property
    def dimension(self):
        return self.chosen.size

    @property
    def candidates(self):
        """Chosen point first, then the rejected points."""
        return np.vstack([self.chosen[None, :], self.rejected])


@dataclass(frozen=True)
class PreferenceDataset:
    events: tuple
    dimension: int

    def __post_init__(self):
        events = tuple(self.events)
        last = 0
        for ev in events:
            if ev.dimension != self.dimension:
                raise InvalidInputError("event dimension differs from dataset dimension")
            if ev.iteration_index <= last:
                raise InvalidInputError("event iteration indices must be strictly increasing")
            last = ev.iteration_index
        object.__setattr__(self, "events", events)

    @classmethod
    def empty(cls, dimension):
        return cls(events=(), dimension=dimension)

    def append(self, event):
        return PreferenceDataset(events=self.events + (event,), dimension=self.dimension)

    def __len__(self):
        return len(self.events)

    @property
    def last_iteration_index(self):
        return self.events[-1].iteration_index if self.events else 0

    def distinct_points(self):
        """(points, slots): lexicographically sorted distinct points plus, per
        event, the latent index of every candidate slot (chosen slot first).

        Sorting makes the fit independent of the storage order of rejected
        points inside events.
        """
        if not self.events:
            return np.empty((0, self.dimension)), []
        stacked = np.vstack([ev.candidates for ev in self.events])
        points, inverse = np.unique(stacked, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        slots = []
        pos = 0
        for ev in self.events:
            m = ev.candidates.shape[0]
            # Rejected slots in sorted index order: summation order (and so
            # the fit, bitwise) is independent of their storage order.
            slots.append([int(inverse[pos])] + sorted(int(i) for i in inverse[pos + 1 : pos + m]))
            pos += m
        return points, slots

    def digest(self):
        h = hashlib.sha256()
        h.update(np.int64(self.dimension).tobytes())
        for ev in self.events:
            h.update(np.int64(ev.iteration_index).tobytes())
            h.update(ev.chosen.tobytes())
            h.update(ev.rejected.tobytes())
        return h.hexdigest()


def btl_choice_probability(goodness, chosen_index):
    """exp(g_chosen) / sum_j exp(g_j), computed with max subtraction."""
    g = np.asarray(goodness, dtype=np.float64).reshape(-1)
    if g.size < 2:
        raise InvalidInputError("BTL choice needs at least two candidates")
    if not 0 <= chosen_index < g.size:
        raise InvalidInputError(f"chosen_index {chosen_index} out of range for {g.size} candidates")
    ex = np.exp(g - g.max())
    return float(ex[chosen_index] / ex.sum())


@dataclass(frozen=True)
class FitOptions:
    restarts: int = 3
    maxiter: int = 200
    gtol: float = 1e-5
    noise_variance: float = 1e-6
    inner_tol: float = 1e-9
    inner_maxiter: int = 60


class _ProfileObjective:
    """Concentrated MAP objective over log hyperparameters.

    For fixed hyperparameters the latent subproblem (BTL log likelihood plus
    the Gaussian prior quadratic) is strictly concave and solved exactly by
    damped Newton; the envelope theorem then gives the hyperparameter
    gradient without latent sensitivities. Equivalent optimum to the joint
    problem, but conditioned well enough for L-BFGS to actually converge.
    """

    def __init__(self, lp, gtol_inner, maxiter_inner):
        self.lp = lp
        self.gtol_inner = gtol_inner
        self.maxiter_inner = maxiter_inner
        self.g_warm = np.zeros(lp.n)
        self.last_g = None

    def _inner_value(self, g, kinv):
        return self.lp._btl_value(g) - 0.5 * float(g @ (kinv @ g))

    def _inner_solve(self, kinv):
        lp = self.lp
        g = self.g_warm.copy()
        for _ in range(self.maxiter_inner):
            lik, u = lp._btl_value_grad(g)
            kg = kinv @ g
            grad = u - kg
            gnorm = float(np.max(np.abs(grad)))
            if gnorm < self.gtol_inner:
                break
            h = lp._btl_hessian(g) + kinv
            try:
                chol = np.linalg.cholesky(h)
            except np.linalg.LinAlgError:
                h[np.diag_indices_from(h)] += 1e-8
                chol = np.linalg.cholesky(h)
            delta = sla.cho_solve((chol, True), grad, check_finite=False)
            f0 = lik - 0.5 * float(g @ kg)
            slope = float(grad @ delta)
            t = 1.0
            while t > 1e-6:
                gn = g + t * delta
                if self._inner_value(gn, kinv) >= f0 + 1e-4 * t * slope:
                    break
                t *= 0.5
            g = g + t * delta
        return g

    def value_and_grad(self, eta):
        lp = self.lp
        sv = float(np.exp(eta[0]))
        ls = np.exp(eta[1:])
        k_nl, dfac = backend.kernel_and_dfac(lp.points, 1.0 / ls, sv)
        k = k_nl + lp.noise * np.eye(lp.n)
        chol, _ = _cholesky_with_escalation(k_nl, lp.noise)
        kinv = sla.lapack.dpotri(chol, lower=1)[0]
        kinv = kinv + np.tril(kinv, -1).T

        g = self._inner_solve(kinv)
        self.g_warm = g
        self.last_g = g
        alpha = kinv @ g

        lik, _ = lp._btl_value_grad(g)
        value = lik - 0.5 * float(g @ alpha) - 0.5 * lp.n * np.log(2.0 * np.pi)
        value += -0.5 * eta[0] ** 2 - 0.5 * float(((eta[1:] - PRIOR_LOG_LS_MEAN) ** 2).sum())
        value += -0.5 * (1 + lp.d) * np.log(2.0 * np.pi)

        w = 0.5 * np.outer(alpha, alpha)
        grad = np.empty(1 + lp.d)
        grad[0] = float((w * k_nl).sum()) - eta[0]
        grad[1:] = backend.lengthscale_grads(w * dfac, lp.points, 1.0 / ls) - (eta[1:] - PRIOR_LOG_LS_MEAN)
        if not (np.isfinite(value) and np.all(np.isfinite(grad))):
            raise NumericalError("non-finite profile objective", term="profile")
        return value, grad


def _warm_latents(lp, warm_model):
    known = {p.tobytes(): v for p, v in zip(warm_model.observed_points, warm_model.latent.values)}
    g = np.empty(lp.n)
    missing = []
    for i, p in enumerate(lp.points):
        v = known.get(p.tobytes())
        if v is None:
            missing.append(i)
        else:
            g[i] = v
    if missing:
        g[missing] = warm_model.predict_mean(lp.points[missing])
    return g


def fit_preference_gp(dataset, seed, options=FitOptions(), warm=None):
    """MAP-fit a PreferenceGP to the dataset.

    Maximizes the joint posterior over (latent values, log hyperparameters):
    quasi-Newton (L-BFGS-B) over the hyperparameters with the concave latent
    subproblem solved exactly per evaluation, best of ``options.restarts``
    seeded starts. With ``warm`` (a model fitted on a prefix of this dataset)
    the first start reuses its solution, which keeps session refits cheap.
    Deterministic for fixed (dataset, seed, options, warm).
    """
    if len(dataset) < 1:
        raise InvalidInputError("fit needs at least one selection event")
    lp = LogPosterior(dataset, noise_variance=options.noise_variance, whitened=True)
    d = dataset.dimension

    starts = []
    warm_g = None
    if warm is not None:
        warm_g = _warm_latents(lp, warm)
        h = warm.hyperparams
        starts.append(np.concatenate([[np.log(h.signal_variance)], np.log(h.length_scales)]))
    else:
        starts.append(np.concatenate([[0.0], np.full(d, PRIOR_LOG_LS_MEAN)]))
    rng = rng_for(seed, "fit-restarts")
    for _ in range(max(0, options.restarts - 1)):
        starts.append(
            np.concatenate([[rng.normal(0.0, 1.0)], rng.normal(PRIOR_LOG_LS_MEAN, 1.0, size=d)])
        )

    bounds = [(-LOG_HYPER_BOUND, LOG_HYPER_BOUND)] * (1 + d)
    best = None
    for start in starts:
        profile = _ProfileObjective(lp, options.inner_tol, options.inner_maxiter)
        if warm_g is not None:
            profile.g_warm = warm_g.copy()

        def objective(eta):
            value, grad = profile.value_and_grad(eta)
            return -value, -grad

        try:
            res = minimize(
                objective,
                start,
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
                options={"maxiter": options.maxiter, "gtol": options.gtol, "maxls": 40},
            )
        except NumericalError:
            continue
        if not np.all(np.isfinite(res.x)) or not np.isfinite(res.fun):
            continue
        if best is None or res.fun < best[0].fun:
            best = (res, profile)

    if best is None:
        warnings.warn("all MAP restarts failed; falling back to prior-mean model", RuntimeWarning)
        h = KernelHyperparams(1.0, np.full(d, 0.2), options.noise_variance)
        return PreferenceGP(
            h, lp.points, LatentGoodness(np.zeros(lp.n)), dataset_ref=dataset.digest(), fit_status="fallback"
        )

    res, profile = best
    # Re-solve the latent subproblem at the winning hyperparameters so the
    # returned latents correspond to res.x rather than the last trial point.
    value, _ = profile.value_and_grad(res.x)
    h = KernelHyperparams(float(np.exp(res.x[0])), np.exp(res.x[1:]), options.noise_variance)
    return PreferenceGP(
        h, lp.points, LatentGoodness(profile.last_g), dataset_ref=dataset.digest(), fit_status="ok"
    )
