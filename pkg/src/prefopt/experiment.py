"""Simulated benchmark experiments: population building, deployment, regret.

A run generates population and test users from the seed stream, builds
population models with the matching no-transfer method for every plane
strategy the requested methods need, deploys each method on every test user,
and logs per-iteration regret of the best selection so far. All outputs are
byte-deterministic for a fixed config.
"""

import hashlib
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from ._seeding import subseed
from .acquisition import DecaySchedule, MaximizerOptions, PopulationGallery
from .backend import BACKEND_NAME
from .benchmarks import eval_user, get_benchmark, oracle_select, synthetic_user
from .errors import ConfigurationError, InvalidInputError
from .session import (
    EngineOptions,
    METHODS,
    SessionConfig,
    export_session,
    is_meta,
    plane_strategy,
    start_session,
    submit_selection,
)

POPULATION_METHOD = {"two_step": "no_transfer_t", "orthogonal": "no_transfer_o"}


def desk_options(dimension):
    """Engine budgets scaled for single-machine experiment matrices.

    High-dimensional 50-iteration runs accumulate >1000 latent points per
    session; these presets trim maximizer starts and warm-refit rounds where
    the extra precision does not change method orderings. Interactive
    sessions keep the full defaults.
    """
    if dimension <= 6:
        maximizer = MaximizerOptions(starts=48, iters=100, cull=((5, 12), (12, 4)))
        late = None
        refit_iters, lookahead_iters, inner = 6, 3, 60
    else:
        maximizer = MaximizerOptions(starts=16, iters=60, cull=((2, 6), (6, 2)))
        late = MaximizerOptions(starts=12, iters=50, cull=((2, 4), (4, 2)))
        refit_iters, lookahead_iters, inner = 3, 1, 6
    from .preference import FitOptions

    return EngineOptions(
        maximizer=maximizer,
        maximizer_late=late,
        refit=FitOptions(restarts=1, maxiter=refit_iters, inner_tol=1e-7, inner_maxiter=inner),
        lookahead_fit=FitOptions(restarts=1, maxiter=lookahead_iters, inner_tol=1e-7, inner_maxiter=inner),
    )


@dataclass(frozen=True)
class ExperimentConfig:
    function: str
    methods: tuple
    iterations: int
    seeds: tuple
    population_users: int = 10
    test_users: int = 10
    decay: DecaySchedule = field(default_factory=lambda: DecaySchedule(5, 0.1))
    options: EngineOptions = field(default_factory=EngineOptions)
    shift_range: float = 0.05
    scale_range: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        for m in self.methods:
            if m not in METHODS:
                raise ConfigurationError(f"unknown method {m!r} (known: {', '.join(METHODS)})")
        if not self.methods:
            raise ConfigurationError("at least one method is required")
        if not self.seeds:
            raise ConfigurationError("at least one seed is required")

    def digest(self):
        opt = self.options
        payload = {
            "function": self.function,
            "methods": self.methods,
            "iterations": self.iterations,
            "seeds": self.seeds,
            "population_users": self.population_users,
            "test_users": self.test_users,
            "decay": (self.decay.d1, self.decay.d2),
            "shift_range": self.shift_range,
            "scale_range": self.scale_range,
            "maximizer": (
                opt.maximizer.starts,
                opt.maximizer.iters,
                opt.maximizer.step0,
                opt.maximizer.shrink,
                opt.maximizer.min_step,
                tuple(opt.maximizer.cull or ()),
            ),
            "fit": (opt.fit.restarts, opt.fit.maxiter, opt.fit.gtol, opt.fit.noise_variance),
            "refit": (opt.refit.restarts, opt.refit.maxiter, opt.refit.inner_tol),
            "lookahead": (opt.lookahead_fit.restarts, opt.lookahead_fit.maxiter),
            "two_step": (opt.two_step_mode, opt.mc_samples),
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True, default=str).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class RegretTrace:
    method: str
    user: int
    seed: int
    values: tuple

    def csv_bytes(self):
        lines = ["iteration,regret"]
        lines.extend(f"{i + 1},{v!r}" for i, v in enumerate(self.values))
        return ("\n".join(lines) + "\n").encode("utf-8")


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    traces: list
    wall_time: float
    population_records: dict = None

    def methods(self):
        return self.config.methods

    def mean_curve(self, method):
        rows = [t.values for t in self.traces if t.method == method]
        if not rows:
            raise InvalidInputError(f"no traces for method {method!r}")
        return np.mean(np.asarray(rows), axis=0)

    def sd_curve(self, method):
        rows = np.asarray([t.values for t in self.traces if t.method == method])
        return rows.std(axis=0, ddof=1) if rows.shape[0] > 1 else np.zeros(rows.shape[1])

    def final_mean(self, method):
        return float(self.mean_curve(method)[-1])

    def summary_rows(self):
        rows = []
        for method in self.config.methods:
            mean = self.mean_curve(method)
            sd = self.sd_curve(method)
            for i in range(mean.size):
                rows.append((self.config.function, method, i + 1, float(mean[i]), float(sd[i])))
        return rows

    def final_rows(self):
        rows = []
        for method in self.config.methods:
            mean = self.mean_curve(method)
            sd = self.sd_curve(method)
            rows.append((self.config.function, method, float(mean[-1]), float(sd[-1])))
        return rows


def _run_oracle_session(session_config, user, iterations, gallery, options):
    state, plane = start_session(session_config, gallery=gallery, options=options)
    best_values = []
    for _ in range(iterations):
        idx = oracle_select(user, plane)
        state, plane = submit_selection(state, idx, satisfied=False)
        best_values.append(eval_user(user, state.best_so_far))
        if plane is None:
            break
    return state, np.asarray(best_values)


def _regret_values(user, best_values):
    regret = user.optimum() - best_values
    if np.any(regret < -1e-6):
        raise InvalidInputError(f"negative regret {regret.min()}: user optimum underestimated")
    return tuple(float(v) for v in np.maximum(regret, 0.0))


def build_population(config, seed, strategy, progress=None):
    """Population models for one seed and plane strategy (no-transfer runs)."""
    base = get_benchmark(config.function)
    method = POPULATION_METHOD[strategy]
    records = []
    for i in range(config.population_users):
        user = synthetic_user(
            base, subseed(seed, "population-user", i), config.shift_range, config.scale_range
        )
        session_config = SessionConfig(
            dimension=base.dimension,
            method=method,
            max_iterations=config.iterations,
            decay=config.decay,
            seed=subseed(seed, "population-session", strategy, i),
            theme=f"{config.function}-population",
        )
        state, _ = _run_oracle_session(session_config, user, config.iterations, None, config.options)
        records.append(export_session(state))
        if progress:
            progress(f"population {strategy} seed={seed} user={i} done")
    return records


def _gallery_from_records(records, strategy):
    models = tuple(r.model for r in records)
    gallery = PopulationGallery(models=models, weights=np.ones(len(models)))
    gallery.tags = tuple(
        {"id": f"pop-{i}", "theme": r.config.theme, "method": r.config.method, "plane_strategy": strategy}
        for i, r in enumerate(records)
    )
    return gallery


def run_experiment(config, progress=None):
    """Full experiment over (method x test user x seed); returns traces."""
    base = get_benchmark(config.function)
    start = time.perf_counter()
    traces = []
    population_records = {}

    strategies = sorted({plane_strategy(m) for m in config.methods if is_meta(m)})
    for seed in config.seeds:
        galleries = {}
        for strategy in strategies:
            records = build_population(config, seed, strategy, progress)
            population_records[(seed, strategy)] = records
            galleries[strategy] = records
        for method in config.methods:
            for i in range(config.test_users):
                user = synthetic_user(
                    base, subseed(seed, "test-user", i), config.shift_range, config.scale_range
                )
                gallery = None
                gallery_ref = None
                if is_meta(method):
                    gallery = _gallery_from_records(galleries[plane_strategy(method)], plane_strategy(method))
                    gallery_ref = f"population:{plane_strategy(method)}:{seed}"
                session_config = SessionConfig(
                    dimension=base.dimension,
                    method=method,
                    max_iterations=config.iterations,
                    decay=config.decay,
                    seed=subseed(seed, "deployment", method, i),
                    gallery_ref=gallery_ref,
                    theme=f"{config.function}-test",
                )
                _, best_values = _run_oracle_session(session_config, user, config.iterations, gallery, config.options)
                traces.append(
                    RegretTrace(method=method, user=i, seed=seed, values=_regret_values(user, best_values))
                )
                if progress:
                    progress(f"deploy {method} seed={seed} user={i} final={traces[-1].values[-1]:.4f}")
    return ExperimentResult(
        config=config,
        traces=traces,
        wall_time=time.perf_counter() - start,
        population_records=population_records,
    )


def write_artifacts(result, out_dir, plot=False):
    """Traces, summary/final CSVs, meta.json, optional SVG regret chart."""
    out = Path(out_dir)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    for trace in result.traces:
        name = f"{trace.method}__seed{trace.seed}__user{trace.user}.csv"
        (out / "traces" / name).write_bytes(trace.csv_bytes())

    lines = ["function,method,iteration,mean_regret,sd_regret"]
    lines.extend(f"{f},{m},{i},{mean!r},{sd!r}" for f, m, i, mean, sd in result.summary_rows())
    (out / "summary.csv").write_bytes(("\n".join(lines) + "\n").encode())

    lines = ["function,method,final_mean_regret,final_sd_regret"]
    lines.extend(f"{f},{m},{mean!r},{sd!r}" for f, m, mean, sd in result.final_rows())
    (out / "final.csv").write_bytes(("\n".join(lines) + "\n").encode())

    meta = {
        "function": result.config.function,
        "methods": list(result.config.methods),
        "iterations": result.config.iterations,
        "seeds": list(result.config.seeds),
        "digest": result.config.digest(),
        "wall_time_seconds": result.wall_time,
        "backend": BACKEND_NAME,
        "version": __version__,
        "complete": True,
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True))
    if plot:
        (out / "regret.svg").write_text(regret_svg(result))
    return out


def load_cached_result(config, out_dir):
    """Result reconstructed from a completed artifact directory, or None."""
    out = Path(out_dir)
    meta_path = out / "meta.json"
    if not meta_path.exists():
        return None
    try:
        meta = json.loads(meta_path.read_text())
    except json.JSONDecodeError:
        return None
    if not meta.get("complete") or meta.get("digest") != config.digest():
        return None
    traces = []
    for method in config.methods:
        for seed in config.seeds:
            for user in range(config.test_users):
                path = out / "traces" / f"{method}__seed{seed}__user{user}.csv"
                if not path.exists():
                    return None
                rows = path.read_text().strip().splitlines()[1:]
                traces.append(
                    RegretTrace(
                        method=method,
                        user=user,
                        seed=seed,
                        values=tuple(float(r.split(",")[1]) for r in rows),
                    )
                )
    return ExperimentResult(config=config, traces=traces, wall_time=float(meta.get("wall_time_seconds", 0.0)))


def ensure_experiment(config, cache_root, progress=None, plot=False):
    """Run the experiment unless a completed cached run already exists."""
    out = Path(cache_root) / f"{config.function}__{config.digest()}"
    cached = load_cached_result(config, out)
    if cached is not None:
        return cached
    result = run_experiment(config, progress=progress)
    write_artifacts(result, out, plot=plot)
    return result


def regret_svg(result, width=720, height=460):
    """Minimal deterministic SVG line chart of mean regret per method."""
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"]
    pad = 50
    curves = {m: result.mean_curve(m) for m in result.config.methods}
    iters = result.config.iterations
    vmax = max(float(c.max()) for c in curves.values()) or 1.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.0f}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">'
        f"{result.config.function}: mean regret</text>",
    ]
    for axis_frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = height - pad - axis_frac * (height - 2 * pad)
        parts.append(
            f'<line x1="{pad}" y1="{y:.1f}" x2="{width - pad}" y2="{y:.1f}" stroke="#dddddd" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{pad - 6}" y="{y + 4:.1f}" text-anchor="end" font-family="sans-serif" font-size="10">'
            f"{axis_frac * vmax:.3f}</text>"
        )
    for ci, (method, curve) in enumerate(curves.items()):
        pts = []
        for i, v in enumerate(curve):
            x = pad + (width - 2 * pad) * (i / max(1, iters - 1))
            y = height - pad - (height - 2 * pad) * (float(v) / vmax)
            pts.append(f"{x:.1f},{y:.1f}")
        color = colors[ci % len(colors)]
        parts.append(f'<polyline points="{" ".join(pts)}" fill="none" stroke="{color}" stroke-width="2"/>')
        parts.append(
            f'<text x="{width - pad + 4}" y="{pad + 14 * ci}" font-family="sans-serif" font-size="11" fill="{color}">{method}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts)
