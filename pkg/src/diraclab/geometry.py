"""Flat torus geometry: distances, rays, cut times, and grid regions.

The model space is R^m / (P_1 Z x ... x P_m Z) with a constant coefficient
metric G.  Geodesics are straight lines in the covering space, so every
metric quantity reduces to a minimum over lattice translates.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

# Lattice translate search window.  Sufficient for metrics with condition
# number <= 9 because the nearest representative of any point then lies
# within 3 fundamental cells of the origin.
_TRANSLATE_RANGE = 3

_CUT_TIME_TOL = 1e-8


def _as_spd(matrix, m: int) -> np.ndarray:
    g = np.asarray(matrix, dtype=float)
    if g.shape != (m, m):
        raise ValueError(f"metric must be {m}x{m}, got {g.shape}")
    if not np.allclose(g, g.T, atol=1e-12):
        raise ValueError("metric must be symmetric")
    eigvals = np.linalg.eigvalsh(g)
    if eigvals[0] <= 0:
        raise ValueError("metric must be positive definite")
    if eigvals[-1] / eigvals[0] > 9.0 + 1e-9:
        raise ValueError(
            "metric condition number exceeds 9; lattice search window "
            "would not be guaranteed to contain the minimizer"
        )
    return g


@dataclass(frozen=True)
class FlatTorusModel:
    """Flat torus R^m / (periods * Z^m) with constant SPD metric.

    Attributes:
        dimension: number of coordinates m (1 or 2 at desk scale).
        periods: tuple of m positive periods P_j.
        metric: constant SPD m x m matrix acting on coordinate displacements.
        grid_n: uniform grid resolution per axis used for sampled sections.
    """

    dimension: int
    periods: tuple
    metric: np.ndarray
    grid_n: int
    _translates: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("dimension must be >= 1")
        periods = tuple(float(p) for p in self.periods)
        if len(periods) != self.dimension:
            raise ValueError("need one period per dimension")
        if any(p <= 0 for p in periods):
            raise ValueError("periods must be positive")
        if self.grid_n < 4:
            raise ValueError("grid_n must be >= 4")
        object.__setattr__(self, "periods", periods)
        object.__setattr__(self, "metric", _as_spd(self.metric, self.dimension))
        offsets = range(-_TRANSLATE_RANGE, _TRANSLATE_RANGE + 1)
        lattice = np.array(
            list(itertools.product(offsets, repeat=self.dimension)), dtype=float
        )
        object.__setattr__(self, "_translates", lattice * np.array(periods))

    @property
    def metric_inv(self) -> np.ndarray:
        return np.linalg.inv(self.metric)

    @property
    def volume(self) -> float:
        """Riemannian volume of the torus."""
        return float(np.prod(self.periods) * np.sqrt(np.linalg.det(self.metric)))

    def reduce(self, x) -> np.ndarray:
        """Map a point of the covering space into [0, P_j) per axis."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.mod(x, np.array(self.periods))

    def grid_axes(self) -> list:
        return [
            np.arange(self.grid_n) * (p / self.grid_n) for p in self.periods
        ]

    def grid_points(self) -> np.ndarray:
        """All grid points, shape (grid_n**m, m), row-major axis order."""
        axes = self.grid_axes()
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([a.ravel() for a in mesh], axis=-1)

    def norm(self, v) -> float:
        """Metric length of a coordinate displacement vector."""
        v = np.asarray(v, dtype=float)
        return float(np.sqrt(v @ self.metric @ v))

    def conorm(self, xi) -> float:
        """Metric length of a covector (frequency) with the inverse metric."""
        xi = np.asarray(xi, dtype=float)
        return float(np.sqrt(xi @ self.metric_inv @ xi))


def geodesic_distance(torus: FlatTorusModel, x, y) -> float:
    """Geodesic distance: minimum metric length over lattice translates.

    d(x, y) = min_v sqrt((x - y + P v)^T G (x - y + P v)) with integer
    translate vectors v bounded by the search window.
    """
    diff = torus.reduce(x) - torus.reduce(y)
    cands = diff + torus._translates
    vals = np.einsum("ij,jk,ik->i", cands, torus.metric, cands)
    return float(np.sqrt(vals.min()))


def pairwise_distance(torus: FlatTorusModel, points, base) -> np.ndarray:
    """Distances from each row of `points` to a single base point."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    diff = np.mod(pts, torus.periods) - torus.reduce(base)
    # broadcast over translates: (npts, ntrans, m)
    cands = diff[:, None, :] + torus._translates[None, :, :]
    vals = np.einsum("pti,ij,ptj->pt", cands, torus.metric, cands)
    return np.sqrt(vals.min(axis=1))


@dataclass(frozen=True)
class GeodesicRay:
    """Unit-speed geodesic t -> base + t * direction (mod periods)."""

    torus: FlatTorusModel
    base: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        base = self.torus.reduce(self.base)
        d = np.asarray(self.direction, dtype=float)
        n = self.torus.norm(d)
        if n <= 0:
            raise ValueError("direction must be nonzero")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "direction", d / n)

    def point(self, t: float) -> np.ndarray:
        return self.torus.reduce(self.base + t * self.direction)


def cut_time(ray: GeodesicRay, t_max: float | None = None) -> float:
    """First time the ray stops minimizing, by bisection.

    The predicate "d(base, ray(t)) < t" is false up to the cut time and
    true beyond it.  Bisection refines the switch point to 1e-8.
    """
    torus = ray.torus

    def minimizing(t: float) -> bool:
        return geodesic_distance(torus, ray.base, ray.point(t)) >= t - _CUT_TIME_TOL

    if t_max is None:
        # distance can never exceed the diameter bound below, so the ray
        # has surely stopped minimizing by then
        lam_max = float(np.linalg.eigvalsh(torus.metric)[-1])
        t_max = np.sqrt(lam_max) * sum(torus.periods)
    lo, hi = 0.0, float(t_max)
    if minimizing(hi):
        raise ValueError("ray still minimizing at t_max; enlarge the bracket")
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if minimizing(mid):
            lo = mid
        else:
            hi = mid
        if hi - lo < _CUT_TIME_TOL:
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class Region:
    """Open metric ball resolved against the torus grid.

    Attributes:
        torus: ambient model.
        center: ball center (reduced).
        radius: ball radius.
        indices: sorted flat grid indices of points strictly inside the ball.
    """

    torus: FlatTorusModel
    center: np.ndarray
    radius: float
    indices: np.ndarray = field(init=False, compare=False)

    def __post_init__(self):
        center = self.torus.reduce(self.center)
        radius = float(self.radius)
        if radius <= 0:
            raise ValueError("region radius must be positive")
        lam_min = float(np.linalg.eigvalsh(self.torus.metric)[0])
        if 2.0 * radius >= np.sqrt(lam_min) * min(self.torus.periods):
            raise ValueError("region does not fit in the torus")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radius", radius)
        dists = pairwise_distance(self.torus, self.torus.grid_points(), center)
        inside = np.flatnonzero(dists < radius)
        object.__setattr__(self, "indices", np.sort(inside))

    def contains(self, x) -> bool:
        return geodesic_distance(self.torus, x, self.center) < self.radius

    def distance_to(self, x) -> float:
        """Distance from a point to the ball (0 inside)."""
        return max(0.0, geodesic_distance(self.torus, x, self.center) - self.radius)


def domain_of_dependence(region: Region, t: float) -> np.ndarray:
    """Grid indices of M(t, O) = { x : d(x, O) <= t }.

    At t = 0 this is the closure of the region on the grid.
    """
    if t < 0:
        raise ValueError("time must be nonnegative")
    torus = region.torus
    dists = pairwise_distance(torus, torus.grid_points(), region.center)
    return np.flatnonzero(dists <= region.radius + t)


def double_cone(region: Region, horizon: float, times) -> np.ndarray:
    """Boolean mask of the double cone C(T, O) on a time grid.

    Rows index times, columns flat grid points.  A pair (t, x) belongs to
    the cone when 0 < t < 2T and d(x, O) <= min(t, 2T - t).
    """
    if horizon <= 0:
        raise ValueError("horizon must be positive")
    torus = region.torus
    times = np.asarray(times, dtype=float)
    dists = pairwise_distance(torus, torus.grid_points(), region.center)
    gap = np.maximum(0.0, dists - region.radius)
    reach = np.minimum(times, 2.0 * horizon - times)
    mask = gap[None, :] <= reach[:, None]
    mask[(times <= 0) | (times >= 2.0 * horizon), :] = False
    return mask
