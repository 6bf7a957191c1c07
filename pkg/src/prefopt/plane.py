"""2D search-plane construction and 5x5 candidate sampling.

A plane is spanned by a center (the incumbent best) and two corner points;
the grid samples s, t in {-1, -0.5, 0, 0.5, 1} row-major and clips
per-coordinate to the unit cube, so clipped cells move but center and
corners stay at their computed locations.
"""

from dataclasses import dataclass

import numpy as np

from ._seeding import rng_for
from .errors import DegeneratePlaneError, InvalidInputError
from .acquisition import MaximizerOptions, maximize_acquisition

GRID_COORDS = np.array([-1.0, -0.5, 0.0, 0.5, 1.0])
GRID_SIZE = 25
CENTER_INDEX = 12


def _point(x, name="point"):
    arr = np.ascontiguousarray(x, dtype=np.float64).reshape(-1)
    if np.any(arr < 0.0) or np.any(arr > 1.0) or not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} must lie in the unit hypercube")
    return arr


@dataclass(frozen=True)
class SearchPlane:
    center: np.ndarray
    corner1: np.ndarray
    corner2: np.ndarray
    reflections: tuple
    grid: np.ndarray

    @property
    def dimension(self):
        return self.center.size


def build_plane(center, c1, c2):
    """Plane through center with corners c1, c2 and their reflections."""
    center = _point(center, "center")
    c1 = _point(c1, "corner1")
    c2 = _point(c2, "corner2")
    if c1.size != center.size or c2.size != center.size:
        raise InvalidInputError("plane points must share one dimension")
    if np.array_equal(c1, center) and np.array_equal(c2, center):
        raise DegeneratePlaneError("all plane-defining points coincide")
    u = c1 - center
    v = c2 - center
    s = GRID_COORDS[:, None, None]
    t = GRID_COORDS[None, :, None]
    grid = center[None, None, :] + s * u[None, None, :] + t * v[None, None, :]
    grid = np.clip(grid.reshape(GRID_SIZE, center.size), 0.0, 1.0)
    grid[CENTER_INDEX] = center
    reflections = (np.clip(2.0 * center - c1, 0.0, 1.0), np.clip(2.0 * center - c2, 0.0, 1.0))
    return SearchPlane(center=center, corner1=c1, corner2=c2, reflections=reflections, grid=grid)


def random_plane(dimension, seed):
    """Plane from three i.i.d. uniform points; degenerate draws are redrawn."""
    if dimension < 2:
        raise InvalidInputError("planes need dimension >= 2")
    rng = rng_for(seed, "random-plane")
    while True:
        center, c1, c2 = rng.uniform(size=(3, dimension))
        if np.array_equal(c1, center) and np.array_equal(c2, center):
            continue
        return build_plane(center, c1, c2)


def project_orthogonal(center, c1, points):
    """Project points onto the hyperplane through center orthogonal to c1-center."""
    u = c1 - center
    norm = np.linalg.norm(u)
    if norm == 0.0:
        raise InvalidInputError("direction c1 - center must be nonzero")
    uhat = u / norm
    rel = np.atleast_2d(points) - center
    return center + rel - np.outer(rel @ uhat, uhat)


def orthogonal_third_point(center, c1, objective, seed, options=MaximizerOptions()):
    """Maximize the objective on the hyperplane orthogonal to c1 - center.

    Probes are projected onto the constraint plane before evaluation and
    before clipping, so the pre-clip result is orthogonal to machine
    precision; the returned point is the clipped projection.
    """
    center = _point(center, "center")
    c1 = _point(c1, "corner1")
    if np.array_equal(c1, center):
        raise InvalidInputError("orthogonal exploration needs c1 != center")

    def projected_objective(points):
        return objective(np.clip(project_orthogonal(center, c1, points), 0.0, 1.0))

    best = maximize_acquisition(projected_objective, center.size, seed, options=options)
    return np.clip(project_orthogonal(center, c1, best)[0], 0.0, 1.0)
