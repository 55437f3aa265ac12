"""Point patterns, pairwise geometry, and the sample container.

Provides the immutable ``LocationSet`` / ``FieldSample`` containers plus the
location-pattern generators used by the simulation studies: nested squares
(growing-domain design), diamond and rectangle lattices, uniform boxes, and
generic density-over-polygon sampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DegenerateDensityError

# Coordinates closer than this are treated as duplicates (coordinate units).
DUPLICATE_TOL = 1e-12


@dataclass(frozen=True)
class LocationSet:
    """n points in R^d, validated on construction and immutable afterwards.

    ``min_separation`` optionally declares a separation Delta > 0 that every
    pairwise distance must meet (the increasing-domain sampling regime).
    Duplicate checking can be disabled explicitly by callers that accept
    coincident points.
    """

    coords: np.ndarray
    min_separation: Optional[float] = None
    check_duplicates: bool = field(default=True, repr=False)

    def __post_init__(self):
        coords = np.atleast_2d(np.asarray(self.coords, dtype=np.float64))
        if coords.ndim != 2 or coords.shape[0] < 1:
            raise ValueError("coords must be a nonempty n x d matrix")
        if not np.all(np.isfinite(coords)):
            raise ValueError("coordinates must be finite")
        coords = coords.copy()
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        if self.min_separation is not None and self.min_separation <= 0:
            raise ValueError("declared separation must be positive")
        if (self.check_duplicates or self.min_separation is not None) and self.n > 1:
            d = distance_matrix(self)
            off = d[np.triu_indices(self.n, k=1)]
            dmin = off.min()
            if self.check_duplicates and dmin <= DUPLICATE_TOL:
                raise ValueError(
                    f"duplicate points: minimum pairwise distance {dmin:g}"
                )
            if self.min_separation is not None and dmin < self.min_separation:
                raise ValueError(
                    f"separation violated: {dmin:g} < {self.min_separation:g}"
                )

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    def prefix(self, n: int) -> "LocationSet":
        """First ``n`` points in insertion order (nested-design slicing)."""
        if not 1 <= n <= self.n:
            raise ValueError(f"prefix size {n} outside 1..{self.n}")
        return LocationSet(self.coords[:n], self.min_separation, check_duplicates=False)


@dataclass(frozen=True)
class FieldSample:
    """A LocationSet together with an n x p matrix of observed values."""

    locations: LocationSet
    values: np.ndarray

    def __post_init__(self):
        values = np.atleast_2d(np.asarray(self.values, dtype=np.float64))
        if values.shape[0] != self.locations.n:
            raise ValueError(
                f"values rows ({values.shape[0]}) != point count ({self.locations.n})"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]


def distance_matrix(locs: LocationSet) -> np.ndarray:
    """Dense n x n Euclidean distance matrix.

    Exactly symmetric with an exactly zero diagonal: the strict upper
    triangle is computed once and mirrored.
    """
    upper = np.triu(cdist(locs.coords, locs.coords), k=1)
    return upper + upper.T


def gen_nested_squares(base_count: int, layers: int, rng: np.random.Generator) -> LocationSet:
    """Growing design of nested origin-centered squares.

    Layer 1 holds ``base_count`` uniform points in a square of side
    sqrt(base_count) (unit point density).  Every later layer scales the
    previous square's side by sqrt(2) and fills the annulus with as many
    points as already exist, doubling the cumulative count.  Points are
    returned in insertion order, so the first ``base_count * 2**(j-1)``
    points always lie inside the j-th square.
    """
    if base_count < 1 or layers < 1:
        raise ValueError("base_count and layers must be >= 1")
    sides = [np.sqrt(base_count * 2.0 ** (j - 1)) for j in range(1, layers + 1)]
    pts = [rng.uniform(-sides[0] / 2, sides[0] / 2, size=(base_count, 2))]
    total = base_count
    for j in range(1, layers):
        need = total  # doubling rule
        inner, outer = sides[j - 1] / 2, sides[j] / 2
        got = []
        remaining = need
        # rejection against the inner square; acceptance probability is 1/2
        for _ in range(10_000):
            cand = rng.uniform(-outer, outer, size=(2 * remaining + 8, 2))
            keep = cand[np.max(np.abs(cand), axis=1) > inner]
            got.append(keep[:remaining])
            remaining -= len(got[-1])
            if remaining == 0:
                break
        if remaining:
            raise RuntimeError("annulus sampling failed to fill a layer")
        pts.append(np.vstack(got))
        total += need
    return LocationSet(np.vstack(pts), check_duplicates=False)


def gen_diamond_grid(m: int) -> LocationSet:
    """Integer lattice points with |x| + |y| <= m; 2m^2 + 2m + 1 points."""
    if m < 0:
        raise ValueError("radius must be >= 0")
    xs, ys = np.meshgrid(np.arange(-m, m + 1), np.arange(-m, m + 1))
    keep = np.abs(xs) + np.abs(ys) <= m
    return LocationSet(
        np.column_stack([xs[keep], ys[keep]]).astype(np.float64),
        check_duplicates=False,
    )


def gen_rectangle_grid(m: int) -> LocationSet:
    """Unit-spaced lattice of width 2m + 1 and height m + 1; (2m+1)(m+1) points."""
    if m < 0:
        raise ValueError("radius must be >= 0")
    xs, ys = np.meshgrid(np.arange(-m, m + 1), np.arange(0, m + 1))
    return LocationSet(
        np.column_stack([xs.ravel(), ys.ravel()]).astype(np.float64),
        check_duplicates=False,
    )


def gen_uniform_rect(n: int, bounds, rng: np.random.Generator) -> LocationSet:
    """n i.i.d. uniform points in a d-dimensional box.

    ``bounds`` is a (d, 2) array of (low, high) per coordinate.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    bounds = np.atleast_2d(np.asarray(bounds, dtype=np.float64))
    if bounds.shape[1] != 2 or np.any(bounds[:, 1] <= bounds[:, 0]):
        raise ValueError("bounds must be nondegenerate (low, high) pairs")
    pts = rng.uniform(bounds[:, 0], bounds[:, 1], size=(n, bounds.shape[0]))
    return LocationSet(pts, check_duplicates=False)


def points_in_polygon(points: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Even-odd-rule point-in-polygon test (vectorized ray casting)."""
    points = np.atleast_2d(points)
    poly = np.asarray(polygon, dtype=np.float64)
    x, y = points[:, 0], points[:, 1]
    inside = np.zeros(len(points), dtype=bool)
    px, py = poly[:, 0], poly[:, 1]
    qx, qy = np.roll(px, -1), np.roll(py, -1)
    for x1, y1, x2, y2 in zip(px, py, qx, qy):
        crosses = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (x < xint)
    return inside


def gen_weighted_region(
    n: int,
    polygon: np.ndarray,
    rng: np.random.Generator,
    density: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    density_bound: Optional[float] = None,
    max_batches: int = 10_000,
) -> LocationSet:
    """Rejection sampling of n points inside a polygon, proportional to a density.

    ``density`` maps an (m, 2) coordinate array to nonnegative weights; None
    means uniform.  ``density_bound`` must dominate the density on the region;
    when omitted it is estimated on a grid over the bounding box (with a small
    safety margin).  Raises :class:`DegenerateDensityError` when the expected
    work explodes, which signals an (almost-)zero density over the region.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    poly = np.asarray(polygon, dtype=np.float64)
    if poly.ndim != 2 or poly.shape[0] < 3:
        raise ValueError("polygon needs at least 3 vertices")
    lo, hi = poly.min(axis=0), poly.max(axis=0)
    if np.any(hi <= lo):
        raise ValueError("polygon has empty bounding box")

    if density is None:
        density = lambda xy: np.ones(len(xy))  # noqa: E731
        bound = 1.0
    elif density_bound is not None:
        bound = float(density_bound)
    else:
        g = np.linspace(0, 1, 64)
        gx, gy = np.meshgrid(lo[0] + g * (hi[0] - lo[0]), lo[1] + g * (hi[1] - lo[1]))
        grid = np.column_stack([gx.ravel(), gy.ravel()])
        vals = np.asarray(density(grid), dtype=np.float64)
        if np.any(vals < 0):
            raise ValueError("density must be nonnegative")
        bound = float(vals.max()) * 1.05
    if not np.isfinite(bound) or bound <= 0:
        raise DegenerateDensityError("density bound is zero or non-finite")

    out = []
    remaining = n
    batch = max(256, 4 * n)
    for _ in range(max_batches):
        cand = rng.uniform(lo, hi, size=(batch, 2))
        u = rng.uniform(0.0, bound, size=batch)
        w = np.asarray(density(cand), dtype=np.float64)
        if np.any(w < 0):
            raise ValueError("density must be nonnegative")
        if np.any(w > bound * (1 + 1e-9)):
            raise DegenerateDensityError("density exceeds its stated bound")
        keep = cand[(u < w) & points_in_polygon(cand, poly)]
        out.append(keep[:remaining])
        remaining -= len(out[-1])
        if remaining == 0:
            return LocationSet(np.vstack(out), check_duplicates=False)
    raise DegenerateDensityError(
        f"accepted only {n - remaining}/{n} points after {max_batches} batches"
    )
