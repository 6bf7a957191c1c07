"""Interactive optimization sessions.

Two phases share one engine: population modeling (no transfer; the final
model is stored for later reuse) and deployment (transfer-weighted
acquisition over a gallery of prior-user models). Each iteration shows a
5x5 plane, records the selection as one preference event, refits the
current model, and builds the next plane from the refreshed acquisition.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from ._seeding import rng_for, subseed
from .acquisition import (
    AcquisitionContext,
    DecaySchedule,
    MaximizerOptions,
    acquisition_objective,
    maximize_acquisition,
    taf_m_weights,
    taf_r_weights,
    two_step_acquisition,
)
from .errors import ConfigurationError, InvalidInputError, InvalidStateError
from .plane import CENTER_INDEX, GRID_SIZE, build_plane, orthogonal_third_point, random_plane
from .preference import FitOptions, PreferenceDataset, SelectionEvent, fit_preference_gp

METHODS = (
    "random",
    "no_transfer_o",
    "no_transfer_t",
    "meta_po_m_o",
    "meta_po_r_o",
    "meta_po_m_t",
    "meta_po_r_t",
)

AWAITING = "awaiting_selection"
SATISFIED = "satisfied"
EXHAUSTED = "exhausted"


def plane_strategy(method):
    if method == "random":
        return "random"
    return "two_step" if method.endswith("_t") else "orthogonal"


def weight_variant(method):
    if method.startswith("meta_po_m"):
        return "taf_m"
    if method.startswith("meta_po_r"):
        return "taf_r"
    return "ei"


def is_meta(method):
    return method.startswith("meta_po")


@dataclass(frozen=True)
class SessionConfig:
    dimension: int
    method: str
    max_iterations: int = 15
    decay: DecaySchedule = field(default_factory=lambda: DecaySchedule(5, 0.1))
    seed: int = 0
    gallery_ref: str = None
    theme: str = ""

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown method {self.method!r} (known: {', '.join(METHODS)})")
        if self.dimension < 2:
            raise ConfigurationError("sessions need dimension >= 2")
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1")
        if is_meta(self.method) and self.gallery_ref is None:
            raise ConfigurationError(f"{self.method} requires a gallery_ref")
        if not is_meta(self.method) and self.gallery_ref is not None:
            raise ConfigurationError(f"{self.method} must not reference a gallery")


@dataclass(frozen=True)
class EngineOptions:
    maximizer: MaximizerOptions = field(default_factory=MaximizerOptions)
    # Optional cheaper maximizer for iterations past the decay window, where
    # the transfer term is gone and argmax precision matters far less.
    maximizer_late: MaximizerOptions = None
    fit: FitOptions = field(default_factory=FitOptions)
    # Warm-started incremental refits: one start, few quasi-Newton rounds.
    refit: FitOptions = field(default_factory=lambda: FitOptions(restarts=1, maxiter=6, inner_tol=1e-7))
    # Hypothetical-augmentation refits barely move the hyperparameters.
    lookahead_fit: FitOptions = field(default_factory=lambda: FitOptions(restarts=1, maxiter=3, inner_tol=1e-7))
    two_step_mode: str = "augment"
    mc_samples: int = 10
    plane_retries: int = 3

    def maximizer_for(self, iteration, schedule):
        if self.maximizer_late is not None and iteration > schedule.window_end:
            return self.maximizer_late
        return self.maximizer


@dataclass
class SessionState:
    config: SessionConfig
    options: EngineOptions
    gallery: object
    dataset: PreferenceDataset
    current_model: object = None
    plane_history: list = field(default_factory=list)
    best_so_far: np.ndarray = None
    iteration: int = 1
    status: str = AWAITING
    least_iteration: int = None
    selections: list = field(default_factory=list)
    _pop_mean_cache: list = None

    @property
    def plane(self):
        return self.plane_history[-1] if self.plane_history else None


def _check_gallery(config, gallery):
    if not is_meta(config.method):
        if gallery is not None:
            raise ConfigurationError(f"{config.method} must not be given a population gallery")
        return
    if gallery is None or len(gallery) == 0:
        raise ConfigurationError(f"{config.method} requires a non-empty population gallery")
    strategy = plane_strategy(config.method)
    for i, model in enumerate(gallery.models):
        if model.dimension != config.dimension:
            raise ConfigurationError(
                f"gallery model {gallery.source_labels[i]} has dimension {model.dimension}, session needs {config.dimension}"
            )
    tags = getattr(gallery, "tags", None)
    if tags:
        bad = [t.get("id", "?") for t in tags if t.get("plane_strategy") not in (None, strategy)]
        if bad:
            raise ConfigurationError(
                f"population models built with a different plane strategy than {strategy!r}: {', '.join(bad)}"
            )


def _pop_means_for(state, points):
    """(M, n) population posterior means at points, cached per point."""
    gallery = state.gallery
    if state._pop_mean_cache is None:
        state._pop_mean_cache = [dict() for _ in gallery.models]
    out = np.empty((len(gallery), points.shape[0]))
    keys = [p.tobytes() for p in points]
    for i, model in enumerate(gallery.models):
        cache = state._pop_mean_cache[i]
        missing = [j for j, key in enumerate(keys) if key not in cache]
        if missing:
            vals = model.predict_mean(points[missing], fast=True)
            for j, v in zip(missing, vals):
                cache[keys[j]] = float(v)
        out[i] = [cache[key] for key in keys]
    return out


def _acquisition_context(state, iteration, best_point):
    config = state.config
    variant = weight_variant(config.method)
    best = None
    if state.current_model is not None:
        best = (best_point, state.current_model.predict_mean(best_point))
    incumbents = None
    if is_meta(config.method):
        if len(state.dataset) > 0:
            points, _ = state.dataset.distinct_points()
            incumbents = tuple(_pop_means_for(state, points).max(axis=1))
        else:
            incumbents = tuple(float(m._train_means.min()) for m in state.gallery.models)
    return AcquisitionContext(
        current_model=state.current_model,
        gallery=state.gallery if is_meta(config.method) else None,
        schedule=config.decay,
        iteration=iteration,
        best_observed=best,
        variant=variant,
        dataset=state.dataset,
        fit_options=state.options.lookahead_fit,
        fit_seed=subseed(config.seed, "ctx-fit", iteration),
        taf_m_probes=state.plane.grid if state.plane is not None else None,
        pop_incumbents=incumbents,
    )


def _update_weights(state):
    config = state.config
    if not is_meta(config.method):
        return
    variant = weight_variant(config.method)
    if variant == "taf_r":
        points, _ = state.dataset.distinct_points()
        pop_means = _pop_means_for(state, points) if len(state.dataset) else None
        w = taf_r_weights(state.gallery, state.current_model, state.dataset, pop_means=pop_means)
    else:
        probes = state.plane.grid if state.plane is not None else rng_for(config.seed, "taf-m-probes").uniform(size=(GRID_SIZE, config.dimension))
        w = taf_m_weights(state.gallery, probes)
    state.gallery.set_weights(w)


def _best_with_incumbents(state, iteration, objective, candidate):
    """Search result vs the population models' own best points, by value.

    While the decay keeps population influence alive, the transfer surface
    peaks near the prior tasks' solutions, so their incumbents are exact
    candidate points for the acquisition argmax that multi-start search has
    to work hard to localize in high dimension. Ties keep the search result.
    """
    if not is_meta(state.config.method):
        return candidate
    from .acquisition import decay as decay_fn

    if decay_fn(state.config.decay, iteration) <= 0.0:
        return candidate
    incumbents = np.array([m.best_observed_point for m in state.gallery.models])
    values = np.asarray(objective(incumbents))
    best = int(np.argmax(values))
    if values[best] > float(np.asarray(objective(candidate[None, :]))[0]):
        return incumbents[best].copy()
    return candidate


def _rank_deficient(center, c1, c2):
    u = c1 - center
    v = c2 - center
    nu = np.linalg.norm(u)
    nv = np.linalg.norm(v)
    if nu == 0.0 and nv == 0.0:
        return True
    if nu == 0.0 or nv == 0.0:
        return True
    resid = v - (v @ u / (nu * nu)) * u
    return np.linalg.norm(resid) <= 1e-9 * nv


def _corner_points(state, iteration, center):
    """(c1, c2) for the plane at ``iteration``, per the method's strategy."""
    config = state.config
    options = state.options
    strategy = plane_strategy(config.method)
    seed = config.seed

    if strategy == "random":
        rng = rng_for(seed, "random-corners", iteration)
        while True:
            c1, c2 = rng.uniform(size=(2, config.dimension))
            if not _rank_deficient(center, c1, c2):
                return c1, c2

    ctx = _acquisition_context(state, iteration, center)
    objective = acquisition_objective(ctx)
    maximizer = options.maximizer_for(iteration, config.decay)
    c1 = maximize_acquisition(objective, config.dimension, subseed(seed, "max", iteration, "c1"), maximizer)
    c1 = _best_with_incumbents(state, iteration, objective, c1)

    for attempt in range(options.plane_retries + 1):
        c2_seed = subseed(seed, "max", iteration, "c2", attempt)
        if strategy == "two_step":
            previous = state.plane.grid if state.plane is not None else ()
            lookahead = two_step_acquisition(
                ctx,
                c1,
                previous,
                subseed(seed, "twostep", iteration, attempt),
                mode=options.two_step_mode,
                mc_samples=options.mc_samples,
            )
            c2 = maximize_acquisition(lookahead, config.dimension, c2_seed, maximizer)
            c2 = _best_with_incumbents(state, iteration, lookahead, c2)
        else:
            if np.array_equal(c1, center):
                break
            c2 = orthogonal_third_point(center, c1, objective, c2_seed, maximizer)
        if not _rank_deficient(center, c1, c2):
            return c1, c2
    # Collinear after retries (e.g. cold-start lookahead degenerates to the
    # base acquisition): fall back to a seeded random second corner.
    rng = rng_for(seed, "fallback-c2", iteration)
    while True:
        c2 = rng.uniform(size=config.dimension)
        if not _rank_deficient(center, c1, c2):
            return c1, c2


def start_session(config, gallery=None, options=None):
    """Create a session and its first search plane."""
    options = options or EngineOptions()
    _check_gallery(config, gallery)
    state = SessionState(
        config=config,
        options=options,
        gallery=gallery,
        dataset=PreferenceDataset.empty(config.dimension),
    )
    if is_meta(config.method):
        gallery.set_weights(np.ones(len(gallery)))
        center = rng_for(config.seed, "init-center").uniform(size=config.dimension)
        c1, c2 = _corner_points(state, 1, center)
        plane = build_plane(center, c1, c2)
    else:
        plane = random_plane(config.dimension, subseed(config.seed, "plane", 1))
    state.plane_history.append(plane)
    return state, plane


def submit_selection(state, chosen_grid_index, satisfied):
    """Record a gallery selection; returns (state, next plane or None)."""
    if state.status != AWAITING:
        raise InvalidStateError(f"session is {state.status}; no further selections accepted")
    if not 0 <= int(chosen_grid_index) < GRID_SIZE:
        raise InvalidInputError(f"grid index must be in [0, {GRID_SIZE - 1}]")
    chosen_grid_index = int(chosen_grid_index)

    config = state.config
    k = state.iteration
    plane = state.plane
    chosen = plane.grid[chosen_grid_index].copy()
    rejected = np.array(
        [p for j, p in enumerate(plane.grid) if j != chosen_grid_index and not np.array_equal(p, chosen)]
    )
    if rejected.shape[0] > 0:
        state.dataset = state.dataset.append(
            SelectionEvent(chosen=chosen, rejected=rejected, iteration_index=k)
        )
    state.best_so_far = chosen
    state.selections.append({"grid_index": chosen_grid_index, "satisfied": bool(satisfied)})

    if config.method != "random" and len(state.dataset) > 0:
        fit_opts = state.options.fit if state.current_model is None else state.options.refit
        state.current_model = fit_preference_gp(
            state.dataset, subseed(config.seed, "fit", k), options=fit_opts, warm=state.current_model
        )

    if satisfied:
        state.status = SATISFIED
        state.least_iteration = k
        return state, None
    if k >= config.max_iterations:
        state.status = EXHAUSTED
        return state, None

    _update_weights(state)
    c1, c2 = _corner_points(state, k + 1, chosen)
    next_plane = build_plane(chosen, c1, c2)
    state.plane_history.append(next_plane)
    state.iteration = k + 1
    return state, next_plane


@dataclass(frozen=True)
class SessionRecord:
    """Serializable snapshot of a session, replayable and storable."""

    config: SessionConfig
    status: str
    least_iteration: int
    selections: tuple
    planes: tuple
    dataset: PreferenceDataset
    model: object
    plane_strategy: str
    options: EngineOptions = field(default_factory=EngineOptions)


def export_session(state):
    """Snapshot the session for persistence or population-model storage."""
    return SessionRecord(
        config=state.config,
        status=state.status,
        least_iteration=state.least_iteration,
        selections=tuple(dict(s) for s in state.selections),
        planes=tuple((p.center, p.corner1, p.corner2) for p in state.plane_history),
        dataset=state.dataset,
        model=state.current_model,
        plane_strategy=plane_strategy(state.config.method),
        options=state.options,
    )


def replay_session(record, gallery=None, options=None):
    """Re-run a recorded session's selections through the engine.

    With the same seed, engine options, and gallery the engine rebuilds the
    identical plane history, which is the deterministic-replay contract for
    exports. Options default to those captured in the record.
    """
    state, plane = start_session(record.config, gallery=gallery, options=options or record.options)
    for sel in record.selections:
        state, plane = submit_selection(state, sel["grid_index"], sel["satisfied"])
    return state
