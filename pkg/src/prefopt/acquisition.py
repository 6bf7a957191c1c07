"""Acquisition machinery.

Expected improvement on the current model, transfer aggregation over a
gallery of frozen prior-user models (confidence or ranking-concordance
weights), the iteration decay that hands control from the population to the
current model, two-step lookahead via hypothetical-preference augmentation,
and a seeded multi-start pattern-search maximizer over the unit cube.
"""

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtr

from ._seeding import rng_for, subseed
from .errors import InvalidInputError, InvalidStateError
from .preference import FitOptions, PreferenceDataset, SelectionEvent, fit_preference_gp

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def expected_improvement(gp, x, y_max, fast=False):
    """Closed-form EI of the GP posterior over y_max; >= 0, scalar for 1D x."""
    scalar = np.asarray(x).ndim == 1
    mean, var = gp.predict(x if not scalar else np.asarray(x)[None, :], fast=fast)
    sigma = np.sqrt(var)
    imp = mean - y_max
    ei = np.where(sigma > 0.0, np.nan, np.maximum(imp, 0.0))
    pos = sigma > 0.0
    if np.any(pos):
        z = imp[pos] / sigma[pos]
        ei[pos] = imp[pos] * ndtr(z) + sigma[pos] * (_INV_SQRT_2PI * np.exp(-0.5 * z * z))
    ei = np.maximum(ei, 0.0)
    return float(ei[0]) if scalar else ei


@dataclass
class PopulationGallery:
    """Ordered frozen prior-user models with dynamic transfer weights."""

    models: tuple
    weights: np.ndarray = None
    source_labels: tuple = None
    access_count: int = 0

    def __post_init__(self):
        self.models = tuple(self.models)
        if self.weights is None:
            self.weights = np.ones(len(self.models))
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float64)
        if self.source_labels is None:
            self.source_labels = tuple(f"model-{i}" for i in range(len(self.models)))
        self.source_labels = tuple(self.source_labels)
        self._validate()

    def _validate(self):
        m = len(self.models)
        if self.weights.shape != (m,):
            raise InvalidInputError("weights length must match number of models")
        if len(self.source_labels) != m:
            raise InvalidInputError("source_labels length must match number of models")
        if m and (np.any(self.weights < 0.0) or np.any(self.weights > 1.0)):
            raise InvalidInputError("weights must lie in [0, 1]")

    def __len__(self):
        return len(self.models)

    def set_weights(self, weights):
        self.weights = np.ascontiguousarray(weights, dtype=np.float64)
        self._validate()

    def with_weights(self, weights):
        return PopulationGallery(self.models, np.asarray(weights, dtype=np.float64), self.source_labels)


@dataclass(frozen=True)
class DecaySchedule:
    d1: int
    d2: float

    def __post_init__(self):
        if self.d1 < 0 or int(self.d1) != self.d1:
            raise InvalidInputError("d1 must be a nonnegative integer")
        if not self.d2 > 0:
            raise InvalidInputError("d2 must be positive")
        object.__setattr__(self, "d1", int(self.d1))

    @property
    def window_end(self):
        """Last iteration with any population influence."""
        return self.d1 + int(np.ceil(1.0 / self.d2))


def decay(schedule, k):
    """Population-weight multiplier at iteration k (1-indexed)."""
    if k < 1:
        raise InvalidInputError("iteration k must be >= 1")
    if k <= schedule.d1:
        return 1.0
    if k <= schedule.d1 + 1.0 / schedule.d2:
        return min(1.0, max(0.0, 1.0 - (k - schedule.d1) * schedule.d2))
    return 0.0


def taf_m_weights(gallery, probes):
    """Confidence weights: 1/(1 + mean posterior variance), scaled to max 1."""
    probes = np.ascontiguousarray(probes, dtype=np.float64)
    if probes.ndim == 1:
        probes = probes[None, :]
    if probes.shape[0] == 0:
        raise InvalidInputError("taf_m_weights needs a non-empty probe set")
    raw = np.empty(len(gallery))
    for i, model in enumerate(gallery.models):
        _, var = model.predict(probes, fast=True)
        raw[i] = 1.0 / (1.0 + float(var.mean()))
    gallery.access_count += 1
    if raw.size == 0:
        return raw
    return raw / raw.max()


def _pair_indices(slots):
    chosen = []
    rejected = []
    for s in slots:
        c = s[0]
        for r in s[1:]:
            chosen.append(c)
            rejected.append(r)
    return np.asarray(chosen, dtype=np.intp), np.asarray(rejected, dtype=np.intp)


def concordance(delta_current, delta_other):
    """Fraction of pairs ordered the same way; a tie on either side is half."""
    sc = np.sign(delta_current)
    so = np.sign(delta_other)
    score = np.where(sc == so, 1.0, np.where((sc == 0.0) ^ (so == 0.0), 0.5, 0.0))
    return float(score.mean())


def taf_r_weights(gallery, current, dataset, pop_means=None):
    """Ranking-concordance weights against the current model.

    Every (chosen, rejected) pair implied by every selection event is scored
    by whether a population model's posterior means order it like the
    current model's. Cold start (no data / no current model) gives uniform
    weights.
    """
    m = len(gallery)
    if current is None or dataset is None or len(dataset) == 0:
        return np.ones(m)
    points, slots = dataset.distinct_points()
    ch, rj = _pair_indices(slots)
    if ch.size == 0:
        return np.ones(m)
    mu_c = current.predict_mean(points)
    dc = mu_c[ch] - mu_c[rj]
    w = np.empty(m)
    for i, model in enumerate(gallery.models):
        mu_i = pop_means[i] if pop_means is not None else model.predict_mean(points, fast=True)
        w[i] = concordance(dc, mu_i[ch] - mu_i[rj])
    gallery.access_count += 1
    return w


@dataclass(frozen=True)
class AcquisitionContext:
    """Everything the per-iteration acquisition needs.

    ``variant`` selects the scoring rule: plain "ei" on the current model or
    transfer aggregation with "taf_m"/"taf_r" weights. ``best_observed`` is
    (point, posterior mean at it) for the current incumbent; absent only at
    the deployment cold start (iteration 1).
    """

    current_model: object
    gallery: PopulationGallery
    schedule: DecaySchedule
    iteration: int
    best_observed: tuple = None
    variant: str = "taf_r"
    dataset: PreferenceDataset = None
    fit_options: FitOptions = field(default_factory=FitOptions)
    fit_seed: int = 0
    taf_m_probes: np.ndarray = None
    pop_incumbents: tuple = None
    _cache: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.variant not in ("ei", "taf_m", "taf_r"):
            raise InvalidInputError(f"unknown acquisition variant {self.variant!r}")
        if self.current_model is None and self.iteration != 1:
            raise InvalidStateError("missing current model is only valid at iteration 1")
        if self.current_model is not None and self.best_observed is None:
            raise InvalidStateError("best_observed is required alongside a current model")


def population_incumbents(ctx):
    """Per-model improvement baseline y_max,i.

    Model i's own posterior mean at the session's observed points, maximized
    (cross-task outputs share no scale, so each model scores the incumbent
    set on its own scale). Before anything is observed the baseline drops to
    the model's minimum training mean, so the population term ranks
    candidates purely by predicted goodness.
    """
    if ctx.pop_incumbents is not None:
        return ctx.pop_incumbents
    cached = ctx._cache.get("pop_incumbents")
    if cached is not None:
        return cached
    observed = None
    if ctx.dataset is not None and len(ctx.dataset) > 0:
        observed, _ = ctx.dataset.distinct_points()
    vals = []
    for model in ctx.gallery.models:
        if observed is None:
            vals.append(float(model._train_means.min()))
        else:
            vals.append(float(model.predict_mean(observed, fast=True).max()))
    result = tuple(vals)
    ctx._cache["pop_incumbents"] = result
    return result


def taf_acquisition(ctx, x):
    """a_k(x) = (1 - d(k)) * EI_current(x) + sum_i d(k) w_i max(0, mu_i - ymax_i)."""
    scalar = np.asarray(x).ndim == 1
    pts = np.asarray(x, dtype=np.float64)
    if scalar:
        pts = pts[None, :]
    gallery = ctx.gallery
    if (gallery is None or len(gallery) == 0) and ctx.current_model is None:
        raise InvalidStateError("acquisition needs a current model or a non-empty gallery")
    dk = decay(ctx.schedule, ctx.iteration)
    acq = np.zeros(pts.shape[0])
    if ctx.current_model is not None and dk < 1.0:
        acq += (1.0 - dk) * expected_improvement(ctx.current_model, pts, ctx.best_observed[1], fast=True)
    if gallery is not None and len(gallery) > 0 and dk > 0.0:
        incumbents = population_incumbents(ctx)
        for model, w, y_max in zip(gallery.models, gallery.weights, incumbents):
            wd = dk * w
            if wd <= 0.0:
                continue
            mu = model.predict_mean(pts, fast=True)
            acq += wd * np.maximum(0.0, mu - y_max)
        gallery.access_count += 1
    return float(acq[0]) if scalar else acq


def acquisition_objective(ctx):
    """Batched callable for the maximizer, per ctx.variant."""
    if ctx.variant == "ei":
        if ctx.current_model is None:
            raise InvalidStateError("EI acquisition needs a current model")
        gp, y_max = ctx.current_model, ctx.best_observed[1]

        def objective(points):
            return expected_improvement(gp, points, y_max, fast=True)

    else:

        def objective(points):
            return taf_acquisition(ctx, points)

    objective.context = ctx
    return objective


@dataclass(frozen=True)
class MaximizerOptions:
    starts: int = 80
    iters: int = 100
    step0: float = 0.25
    shrink: float = 0.5
    min_step: float = 1e-3
    cull: tuple = ((6, 16), (14, 4))


def maximize_acquisition(objective, dimension, seed, options=MaximizerOptions()):
    """Seeded multi-start coordinate pattern search over [0,1]^d.

    Uniform starts refined by up to ``options.iters`` rounds of +/-step
    coordinate probes with a shrinking step; strictly-improving moves only,
    so a constant objective returns the first sampled start. After the
    configured rounds the field is culled to the best performers (by value,
    then start index), which converged starts leave early anyway. The best
    probe overall wins, ties broken by start index. Deterministic for fixed
    (objective, seed, options).
    """
    d = int(dimension)
    rng = rng_for(seed, "maximizer")
    x = rng.uniform(size=(options.starts, d))
    f = np.asarray(objective(x), dtype=np.float64)
    step = np.full(options.starts, options.step0)
    cull_at = dict(options.cull or ())

    for it in range(options.iters):
        keep = cull_at.get(it)
        if keep is not None and keep < options.starts:
            order = np.lexsort((np.arange(options.starts), -f))
            step[order[keep:]] = 0.0
        active = np.flatnonzero(step >= options.min_step)
        if active.size == 0:
            break
        a = active.size
        probes = np.repeat(x[active][:, None, :], 2 * d, axis=1)
        cols = np.arange(d)
        probes[:, 2 * cols, cols] += step[active][:, None]
        probes[:, 2 * cols + 1, cols] -= step[active][:, None]
        np.clip(probes, 0.0, 1.0, out=probes)
        fp = np.asarray(objective(probes.reshape(a * 2 * d, d))).reshape(a, 2 * d)
        best_j = fp.argmax(axis=1)
        best_val = fp[np.arange(a), best_j]
        improved = best_val > f[active]
        moved = active[improved]
        x[moved] = probes[improved, best_j[improved]]
        f[moved] = best_val[improved]
        step[active[~improved]] *= options.shrink

    winner = np.lexsort((np.arange(options.starts), -f))[0]
    return x[winner].copy()


def _joint_posterior(gp, points):
    import scipy.linalg as sla

    from . import backend

    h = gp.hyperparams
    kx = backend.cross_kernel(points, gp.observed_points, h.inv_length_scales, h.signal_variance)
    mean = kx @ gp._alpha
    v = sla.solve_triangular(gp._chol, kx.T, lower=True, check_finite=False)
    kzz = backend.cross_kernel(points, points, h.inv_length_scales, h.signal_variance)
    cov = kzz - v.T @ v
    return mean, cov


def _augmented_objective(ctx, chosen, rejected, seed):
    iteration_index = ctx.dataset.last_iteration_index + 1
    event = SelectionEvent(chosen=chosen, rejected=rejected, iteration_index=iteration_index)
    augmented = ctx.dataset.append(event)
    refit = fit_preference_gp(augmented, seed, options=ctx.fit_options, warm=ctx.current_model)
    if refit.fit_status != "ok":
        raise RuntimeError("augmented refit fell back to the prior-mean model")
    gallery = ctx.gallery
    if gallery is not None and len(gallery) > 0 and ctx.variant == "taf_r":
        gallery = gallery.with_weights(taf_r_weights(gallery, refit, augmented))
    new_ctx = replace(
        ctx,
        current_model=refit,
        dataset=augmented,
        best_observed=(np.asarray(chosen, dtype=np.float64), refit.predict_mean(np.asarray(chosen))),
        gallery=gallery,
        pop_incumbents=None,
        _cache={},
    )
    return acquisition_objective(new_ctx)


def two_step_acquisition(ctx, x1, previous_plane, seed, mode="augment", mc_samples=10):
    """Lookahead acquisition after hypothetically preferring x1.

    Default mode augments the dataset with (x1 preferred over the previous
    plane), refits, recomputes transfer weights, and returns the resulting
    acquisition. Monte Carlo mode instead samples joint posterior values at
    x1 plus the previous plane, generates one hypothetical winner per
    sample, and averages the per-sample acquisitions. Falls back to the
    unaugmented acquisition (status attribute "unaugmented") when there is
    nothing to augment with or the refit fails.
    """
    base = acquisition_objective(ctx)
    x1 = np.ascontiguousarray(x1, dtype=np.float64).reshape(-1)
    plane_pts = np.asarray(previous_plane, dtype=np.float64).reshape(-1, x1.size) if len(previous_plane) else np.empty((0, x1.size))
    rejected = plane_pts[[not np.array_equal(p, x1) for p in plane_pts]] if plane_pts.shape[0] else plane_pts
    if rejected.shape[0] == 0:
        base.status = "unaugmented"
        return base

    try:
        if mode == "augment":
            objective = _augmented_objective(ctx, x1, rejected, seed)
            objective.status = "augmented"
            return objective
        if mode != "mc":
            raise InvalidInputError(f"unknown two-step mode {mode!r}")
        if ctx.current_model is None:
            base.status = "unaugmented"
            return base
        z = np.vstack([x1[None, :], rejected])
        mean, cov = _joint_posterior(ctx.current_model, z)
        try:
            lz = np.linalg.cholesky(cov + 1e-10 * np.eye(z.shape[0]))
        except np.linalg.LinAlgError:
            lz = np.zeros_like(cov)
        rng = rng_for(seed, "two-step-mc")
        draws = mean[None, :] + rng.standard_normal((mc_samples, z.shape[0])) @ lz.T
        parts = []
        for s in range(mc_samples):
            winner = int(np.argmax(draws[s]))
            others = np.delete(z, winner, axis=0)
            parts.append(_augmented_objective(ctx, z[winner], others, subseed(seed, "mc-refit", s)))

        def objective(points):
            return sum(p(points) for p in parts) / float(len(parts))

        objective.status = "mc"
        return objective
    except Exception as exc:  # refit failure: degrade, never break the loop
        warnings.warn(f"two-step refit failed ({exc}); using unaugmented acquisition", RuntimeWarning)
        base.status = "unaugmented_fallback"
        return base
