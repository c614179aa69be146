"""Truncated Fourier x fiber discretization of sections.

Sections of the bundle are represented by coefficients on the orthonormal
basis e^{i k.x} (x) f_l / sqrt(Vol) with modes |n|_inf <= K.  The grid
resolution defaults to N = 2K + 1 per axis, which makes the coefficient
to grid map a scaled unitary: band-limited sections correspond one to one
with their grid samples, grid quadrature of products of two band-limited
factors is exact, and pointwise multiplication by a sampled field is an
exact operation on the collocation space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import FlatTorusModel, Region


@dataclass(frozen=True)
class FourierBasis:
    """Mode table and transforms for the truncated section space.

    Attributes:
        torus: ambient flat torus model.
        cutoff: mode cutoff K (modes with |n_j| <= K per axis).
        rank: fiber rank n.
    """

    torus: FlatTorusModel
    cutoff: int
    rank: int
    modes: np.ndarray = field(init=False, repr=False, compare=False)
    kvecs: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.cutoff < 1:
            raise ValueError("cutoff must be >= 1")
        if self.torus.grid_n < 2 * self.cutoff + 1:
            raise ValueError("grid_n must be >= 2K + 1 to resolve the modes")
        m = self.torus.dimension
        axis = np.arange(-self.cutoff, self.cutoff + 1)
        mesh = np.meshgrid(*([axis] * m), indexing="ij")
        modes = np.stack([a.ravel() for a in mesh], axis=-1)
        kvecs = modes * (2.0 * np.pi / np.array(self.torus.periods))
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "kvecs", kvecs)

    @property
    def n_modes(self) -> int:
        return self.modes.shape[0]

    @property
    def dim(self) -> int:
        return self.n_modes * self.rank

    @property
    def volume(self) -> float:
        return self.torus.volume

    def conorms(self) -> np.ndarray:
        """Covector norms |k|_{G^{-1}} of every mode."""
        ginv = self.torus.metric_inv
        return np.sqrt(np.einsum("ni,ij,nj->n", self.kvecs, ginv, self.kvecs))

    def mode_index(self, n) -> int:
        """Flat mode position of an integer multi-index."""
        n = np.asarray(n, dtype=int)
        if np.any(np.abs(n) > self.cutoff):
            raise ValueError("mode outside cutoff")
        width = 2 * self.cutoff + 1
        idx = 0
        for c in n:
            idx = idx * width + (int(c) + self.cutoff)
        return idx

    def flat_index(self, n, fiber: int) -> int:
        return self.mode_index(n) * self.rank + fiber

    def unit_section(self, n, fiber: int) -> np.ndarray:
        c = np.zeros(self.dim, dtype=complex)
        c[self.flat_index(n, fiber)] = 1.0
        return c

    # -- point evaluation ------------------------------------------------

    def evaluate(self, coeffs, points) -> np.ndarray:
        """Evaluate a coefficient vector at arbitrary points.

        Returns an array of fiber values, shape (npts, rank).
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        phases = np.exp(1j * pts @ self.kvecs.T) / np.sqrt(self.volume)
        c = np.asarray(coeffs).reshape(self.n_modes, self.rank)
        return phases @ c

    # -- grid transforms -------------------------------------------------

    def _grid_shape(self):
        return (self.torus.grid_n,) * self.torus.dimension

    def to_grid(self, coeffs) -> np.ndarray:
        """Sample on the torus grid; shape (*grid, rank).

        Exact for every coefficient vector (the basis functions are sampled
        exactly).
        """
        N = self.torus.grid_n
        m = self.torus.dimension
        shape = self._grid_shape()
        c = np.asarray(coeffs, dtype=complex).reshape(self.n_modes, self.rank)
        spread = np.zeros(shape + (self.rank,), dtype=complex)
        idx = tuple(np.mod(self.modes[:, d], N) for d in range(m))
        np.add.at(spread, idx, c)
        vals = np.fft.ifftn(spread, axes=tuple(range(m))) * (N**m)
        return vals / np.sqrt(self.volume)

    def from_grid(self, values) -> np.ndarray:
        """Coefficients of sampled data; inverse of `to_grid` when the
        samples come from the collocation space (always true at N = 2K+1).
        """
        N = self.torus.grid_n
        m = self.torus.dimension
        vals = np.asarray(values, dtype=complex).reshape(
            self._grid_shape() + (self.rank,)
        )
        spec = np.fft.fftn(vals, axes=tuple(range(m))) / (N**m)
        idx = tuple(np.mod(self.modes[:, d], N) for d in range(m))
        c = spec[idx] * np.sqrt(self.volume)
        return c.reshape(self.dim)

    def grid_weight(self) -> float:
        """Riemannian quadrature weight of one grid cell."""
        return self.volume / (self.torus.grid_n ** self.torus.dimension)

    def grid_multiply(self, coeffs, factor_grid) -> np.ndarray:
        """Pointwise multiply by a sampled endomorphism field.

        `factor_grid` has shape (*grid, rank, rank).  At N = 2K+1 this is
        an exact operation on the collocation space and preserves the
        inner product when the field is pointwise unitary.
        """
        vals = self.to_grid(coeffs)
        out = np.einsum("...ij,...j->...i", factor_grid, vals)
        return self.from_grid(out)

    # -- region helpers ----------------------------------------------------

    def restrict(self, coeffs, region: Region) -> np.ndarray:
        """Values at the region's grid points, shape (len(indices), rank)."""
        vals = self.to_grid(coeffs).reshape(-1, self.rank)
        return vals[region.indices]

    def support_defect(self, coeffs, region: Region) -> float:
        """Largest |value| at grid points outside the region, relative
        to the largest |value| overall."""
        vals = np.abs(self.to_grid(coeffs).reshape(-1, self.rank)).max(axis=1)
        peak = vals.max()
        if peak == 0.0:
            return 0.0
        outside = np.ones(vals.shape[0], dtype=bool)
        outside[region.indices] = False
        return float(vals[outside].max() / peak) if outside.any() else 0.0

    def mask_to_region(self, coeffs, region: Region) -> np.ndarray:
        """Zero the grid samples outside the region and re-expand.

        With N = 2K+1 the result is exactly supported (gridwise) in the
        region.
        """
        vals = self.to_grid(coeffs).reshape(-1, self.rank)
        keep = np.zeros(vals.shape[0], dtype=bool)
        keep[region.indices] = True
        vals[~keep] = 0.0
        return self.from_grid(vals)

    def random_section(self, rng, scale: float = 1.0) -> np.ndarray:
        c = rng.standard_normal(self.dim) + 1j * rng.standard_normal(self.dim)
        return scale * c / np.sqrt(2.0)


def inner(a, b) -> complex:
    """L^2 inner product of coefficient vectors (conjugate-linear in a)."""
    return complex(np.vdot(a, b))


def norm(a) -> float:
    return float(np.linalg.norm(a))


def gaussian_bump_coeffs(
    basis: FourierBasis, center, sigma: float, fiber_vector=None
) -> np.ndarray:
    """Band-limited bump with Gaussian mode profile, peak value 1 at center.

    The coefficient of mode k is proportional to exp(-sigma^2 |k|^2 / 2)
    with the covector norm of the torus metric, so the bump is metrically
    isotropic of width sigma.  Truncation ringing decays like
    exp(-(sigma k_max)^2 / 2).
    """
    center = np.asarray(center, dtype=float)
    amps = np.exp(-0.5 * (sigma * basis.conorms()) ** 2)
    phases = np.exp(-1j * (basis.kvecs @ center))
    profile = amps * phases
    # normalize the peak: value at the center is sum(amps)/sqrt(Vol)
    profile = profile * (np.sqrt(basis.volume) / amps.sum())
    if fiber_vector is None:
        fiber_vector = np.zeros(basis.rank, dtype=complex)
        fiber_vector[0] = 1.0
    fiber_vector = np.asarray(fiber_vector, dtype=complex)
    return np.kron(profile, fiber_vector)
