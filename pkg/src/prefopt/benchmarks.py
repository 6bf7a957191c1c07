"""Benchmark objectives, normalization, and synthetic preference users.

All functions are exposed as "goodness" evaluators to maximize over the
unit cube, linearly normalized so outputs lie in [-1, 1] with the maximum at
exactly +1. Normalization constants live in data/normalization.json; they
are produced once by `compute_normalization` (dense random search plus local
polish from the best candidates, minimum padded downward so sampled values
can never escape the band) or analytically where possible.

Synthetic users perturb a base function by a per-dimension shift (uniform in
+/-shift_range, applied to the query point and clipped to the domain) and a
multiplicative value scale (uniform in 1 +/- scale_range).
"""

import json
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import numpy as np
from scipy.optimize import minimize

from ._seeding import rng_for
from .errors import InvalidInputError

DEFAULT_SHIFT_RANGE = 0.05
DEFAULT_SCALE_RANGE = 0.1

_HART3_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
_HART3_A = np.array([[3.0, 10.0, 30.0], [0.1, 10.0, 35.0], [3.0, 10.0, 30.0], [0.1, 10.0, 35.0]])
_HART3_P = 1e-4 * np.array(
    [[3689, 1170, 2673], [4699, 4387, 7470], [1091, 8732, 5547], [381, 5743, 8828]], dtype=np.float64
)

_HART6_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
_HART6_A = np.array(
    [
        [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
        [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
        [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
        [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
    ]
)
_HART6_P = 1e-4 * np.array(
    [
        [1312, 1696, 5569, 124, 8283, 5886],
        [2329, 4135, 8307, 3736, 1004, 9991],
        [2348, 1451, 3522, 2883, 3047, 6650],
        [4047, 8828, 8732, 5743, 1091, 381],
    ],
    dtype=np.float64,
)

# Published optimizers, used to seed the argmax polish.
_HART3_OPT = np.array([0.114614, 0.555649, 0.852547])
_HART6_OPT = np.array([0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573])

GAUSSIAN_SIGMA_FACTOR = 0.05  # sigma = 0.05 sqrt(d): a sharp peak; see the normalization notes


def _batch(x, dim):
    arr = np.asarray(x, dtype=np.float64)
    squeeze = arr.ndim == 1
    if squeeze:
        arr = arr[None, :]
    if arr.shape[1] != dim:
        raise InvalidInputError(f"expected dimension {dim}, got {arr.shape[1]}")
    return arr, squeeze


def _hartmann(x, alpha, a, p):
    inner = ((x[:, None, :] - p[None, :, :]) ** 2 * a[None, :, :]).sum(axis=2)
    return np.exp(-inner) @ alpha


def hartmann3_goodness(x):
    arr, squeeze = _batch(x, 3)
    out = _hartmann(arr, _HART3_ALPHA, _HART3_A, _HART3_P)
    return float(out[0]) if squeeze else out


def hartmann6_goodness(x):
    arr, squeeze = _batch(x, 6)
    out = _hartmann(arr, _HART6_ALPHA, _HART6_A, _HART6_P)
    return float(out[0]) if squeeze else out


def isotropic_gaussian_goodness(x, dimension):
    arr, squeeze = _batch(x, dimension)
    sigma2 = (GAUSSIAN_SIGMA_FACTOR**2) * dimension
    out = np.exp(-((arr - 0.5) ** 2).sum(axis=1) / (2.0 * sigma2))
    return float(out[0]) if squeeze else out


def rosenbrock_goodness(x, dimension):
    arr, squeeze = _batch(x, dimension)
    a = arr[:, :-1]
    b = arr[:, 1:]
    out = -(100.0 * (b - a * a) ** 2 + (1.0 - a) ** 2).sum(axis=1)
    return float(out[0]) if squeeze else out


@dataclass(frozen=True)
class BenchmarkFunction:
    name: str
    dimension: int
    raw_min: float
    raw_max: float
    argmax: np.ndarray
    boundary_optimum: bool

    def raw(self, x):
        if self.name == "hartmann3":
            return hartmann3_goodness(x)
        if self.name == "hartmann6":
            return hartmann6_goodness(x)
        if self.name.startswith("isotropic_gaussian"):
            return isotropic_gaussian_goodness(x, self.dimension)
        if self.name.startswith("rosenbrock"):
            return rosenbrock_goodness(x, self.dimension)
        raise InvalidInputError(f"unknown benchmark {self.name!r}")

    def normalized(self, x):
        span = self.raw_max - self.raw_min
        return -1.0 + 2.0 * (self.raw(x) - self.raw_min) / span


BENCHMARK_NAMES = ("hartmann3", "hartmann6", "isotropic_gaussian15", "rosenbrock20")


def _normalization_table():
    path = resources.files("prefopt").joinpath("data/normalization.json")
    with path.open("r", encoding="utf-8") as fh:
        return json.load(fh)


@lru_cache(maxsize=None)
def get_benchmark(name):
    """Benchmark by name; isotropic_gaussian<d> is available for any d >= 2."""
    if name.startswith("isotropic_gaussian"):
        d = int(name[len("isotropic_gaussian") :])
        if d < 2:
            raise InvalidInputError("isotropic gaussian needs dimension >= 2")
        # Analytic: max 1 at the center, min at the corners; the exponent
        # 0.25 d / (2 sigma^2) is independent of d for sigma = 0.15 sqrt(d).
        return BenchmarkFunction(
            name=name,
            dimension=d,
            raw_min=float(np.exp(-0.25 / (2.0 * GAUSSIAN_SIGMA_FACTOR**2))) - 1e-12,
            raw_max=1.0,
            argmax=np.full(d, 0.5),
            boundary_optimum=False,
        )
    table = _normalization_table()
    if name not in table:
        raise InvalidInputError(f"unknown benchmark {name!r} (known: {', '.join(BENCHMARK_NAMES)})")
    entry = table[name]
    return BenchmarkFunction(
        name=name,
        dimension=int(entry["dimension"]),
        raw_min=float(entry["raw_min"]),
        raw_max=float(entry["raw_max"]),
        argmax=np.array(entry["argmax"], dtype=np.float64),
        boundary_optimum=bool(entry["boundary_optimum"]),
    )


def compute_normalization(name, samples=10_000_000, seed=20240501, pad_fraction=1e-3):
    """Raw extrema for a benchmark: dense seeded search + polish of top 100.

    The minimum is padded downward by pad_fraction of the observed range so
    normalized outputs provably stay inside [-1, 1]; the maximum is the
    polished optimum itself so the normalized maximum is exactly +1.
    """
    if name == "hartmann3":
        dim, raw, opt_seed, boundary = 3, hartmann3_goodness, _HART3_OPT, False
    elif name == "hartmann6":
        dim, raw, opt_seed, boundary = 6, hartmann6_goodness, _HART6_OPT, False
    elif name == "rosenbrock20":
        dim, raw, opt_seed, boundary = 20, lambda x: rosenbrock_goodness(x, 20), np.ones(20), True
    else:
        raise InvalidInputError(f"normalization for {name!r} is analytic or unknown")

    rng = rng_for(seed, "normalization", name)
    best_max = opt_seed.copy()
    best_min_val = np.inf
    best_min_pts = []
    chunk = 500_000
    remaining = samples
    top = []
    bottom = []
    while remaining > 0:
        n = min(chunk, remaining)
        remaining -= n
        pts = rng.uniform(size=(n, dim))
        vals = raw(pts)
        hi = np.argsort(vals)[-20:]
        lo = np.argsort(vals)[:20]
        top.extend(zip(vals[hi], map(tuple, pts[hi])))
        bottom.extend(zip(vals[lo], map(tuple, pts[lo])))
    top = sorted(top, key=lambda t: -t[0])[:100]
    bottom = sorted(bottom, key=lambda t: t[0])[:100]

    def polish(x0, sign):
        res = minimize(
            lambda x: sign * raw(x[None, :])[0],
            x0,
            method="L-BFGS-B",
            bounds=[(0.0, 1.0)] * dim,
            options={"maxiter": 500},
        )
        return res.x, sign * res.fun

    candidates = [polish(np.array(p), -1.0) for _, p in top]
    candidates.append(polish(opt_seed, -1.0))
    argmax, raw_max = max(candidates, key=lambda t: t[1])
    raw_max = float(raw(argmax[None, :])[0])

    low_candidates = [polish(np.array(p), 1.0) for _, p in bottom]
    raw_min = min(v for _, v in low_candidates)
    if name == "rosenbrock20":
        # The most negative goodness sits at a cube vertex; scan alternating
        # corner patterns as well.
        verts = rng.integers(0, 2, size=(200_000, dim)).astype(np.float64)
        raw_min = min(raw_min, float(raw(verts).min()))
    raw_min = float(raw_min - pad_fraction * (raw_max - raw_min))

    return {
        "dimension": dim,
        "raw_min": raw_min,
        "raw_max": raw_max,
        "argmax": [float(v) for v in argmax],
        "boundary_optimum": boundary,
        "samples": samples,
        "seed": seed,
        "pad_fraction": pad_fraction,
    }


@dataclass(frozen=True)
class SyntheticUser:
    """A simulated user: shifted, scaled benchmark as implicit goodness."""

    base: BenchmarkFunction
    shift: np.ndarray
    scale: float
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "shift", np.ascontiguousarray(self.shift, dtype=np.float64))
        if self.shift.size != self.base.dimension:
            raise InvalidInputError("shift length must match the base dimension")

    @property
    def dimension(self):
        return self.base.dimension

    def optimum(self):
        """Best achievable value of eval_user over the cube."""
        return _user_optimum(self)


def synthetic_user(base, seed, shift_range=DEFAULT_SHIFT_RANGE, scale_range=DEFAULT_SCALE_RANGE):
    rng = rng_for(seed, "synthetic-user")
    shift = rng.uniform(-shift_range, shift_range, size=base.dimension)
    scale = float(rng.uniform(1.0 - scale_range, 1.0 + scale_range))
    return SyntheticUser(base=base, shift=shift, scale=scale, seed=int(seed) if np.isscalar(seed) else 0)


def eval_user(user, x):
    """scale * normalized_base(clip(x + shift)); batch for 2D input."""
    arr = np.asarray(x, dtype=np.float64)
    squeeze = arr.ndim == 1
    if squeeze:
        arr = arr[None, :]
    shifted = np.clip(arr + user.shift[None, :], 0.0, 1.0)
    out = user.scale * user.base.normalized(shifted)
    return float(out[0]) if squeeze else out


_USER_OPT_CACHE = {}


def _user_optimum(user):
    key = (user.base.name, user.shift.tobytes(), user.scale)
    cached = _USER_OPT_CACHE.get(key)
    if cached is not None:
        return cached
    base = user.base
    if not base.boundary_optimum:
        # The unshifted argmax stays reachable: x = argmax - shift is in the
        # cube for every supported interior-optimum benchmark.
        x = base.argmax - user.shift
        if np.all(x >= 0.0) and np.all(x <= 1.0):
            val = float(eval_user(user, x))
        else:
            val = _search_user_optimum(user)
    else:
        val = _search_user_optimum(user)
    _USER_OPT_CACHE[key] = val
    return val


def _search_user_optimum(user):
    """Boundary-optimum case: maximize over the reachable (clipped) box."""
    base = user.base
    lo = np.maximum(0.0, user.shift)
    hi = np.minimum(1.0, 1.0 + user.shift)

    def neg(z):
        return -base.normalized(z[None, :])[0]

    starts = [np.clip(base.argmax, lo, hi)]
    rng = rng_for(user.seed, "user-optimum")
    starts.extend(lo + rng.uniform(size=(20, base.dimension)) * (hi - lo))
    best = -np.inf
    for x0 in starts:
        res = minimize(neg, x0, method="L-BFGS-B", bounds=list(zip(lo, hi)), options={"maxiter": 500})
        best = max(best, -res.fun)
    return float(user.scale * best)


def oracle_select(user, plane):
    """Grid index of the user's best candidate; ties go to the lowest index."""
    values = eval_user(user, plane.grid)
    return int(np.argmax(values))
