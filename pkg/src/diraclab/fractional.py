"""Fractional powers of the Dirac operator and the local solve map.

All operators act through the spectral resolution: D^alpha multiplies
eigenamplitudes by sign(lambda) |lambda|^alpha, the heat semigroup by
exp(-t lambda^2).  The inverse power needed by the solve map exists only
on the orthogonal complement of the kernel, and callers must stay there;
violations raise with the offending inner products listed.

The Gamma-integral route to the inverse Laplacian power,

    Delta^{-alpha} = (1/Gamma(alpha)) int_0^inf e^{-t Delta} t^{alpha-1} dt,

is evaluated by trapezoid quadrature after the substitution t = e^s, which
makes the integrand decay doubly exponentially on the right and at rate
alpha on the left.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dirac import SpectralResolution
from .geometry import Region

SUPPORT_TOL = 1e-10
KERNEL_ORTH_TOL = 1e-10


class KernelObstruction(ValueError):
    """Source has a component along the kernel of D.

    Attributes:
        overlaps: list of (eigen index, |<f, phi_k>|) for offending modes.
    """

    def __init__(self, overlaps):
        self.overlaps = list(overlaps)
        pairs = ", ".join(f"k={i}: {v:.3e}" for i, v in self.overlaps)
        super().__init__(
            f"source is not orthogonal to the kernel ({pairs}); "
            "project it off first"
        )


class SupportViolation(ValueError):
    """Source does not vanish on the grid outside the prescribed region."""


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"fractional order must lie in (0, 1), got {alpha}")
    return alpha


def kernel_overlaps(res: SpectralResolution, coeffs):
    """Inner products of a section with the kernel eigensections."""
    amps = res.to_eigen(coeffs)
    idx = np.flatnonzero(res.is_kernel())
    return [(int(i), float(np.abs(amps[i]))) for i in idx]


def require_kernel_orthogonal(res: SpectralResolution, coeffs):
    nrm = float(np.linalg.norm(coeffs))
    bad = [
        (i, v)
        for i, v in kernel_overlaps(res, coeffs)
        if v > KERNEL_ORTH_TOL * max(nrm, 1e-300)
    ]
    if bad:
        raise KernelObstruction(bad)


def project_off_kernel(res: SpectralResolution, coeffs) -> np.ndarray:
    """Remove the kernel component of a section."""
    return np.asarray(coeffs, dtype=complex) - res.kernel_projection(coeffs)


def localized_orthogonal_source(
    res: SpectralResolution, region: Region, coeffs
) -> np.ndarray:
    """Make a section supported in the region and orthogonal to the kernel.

    Masks the input to the region's grid points, then subtracts a masked
    combination of kernel eigensections chosen (via a small Gram solve) to
    kill all kernel overlaps.  Both operations preserve grid support, so
    the result passes the support check of source_to_solution exactly.
    """
    basis = res.basis
    g = basis.mask_to_region(np.asarray(coeffs, dtype=complex), region)
    kdim = res.kernel_dim
    if kdim == 0:
        return g
    kern = res.vectors[:, res.is_kernel()]
    masked = np.stack(
        [basis.mask_to_region(kern[:, j], region) for j in range(kdim)],
        axis=1,
    )
    gram = kern.conj().T @ masked
    rhs = kern.conj().T @ g
    c = np.linalg.solve(gram, rhs)
    return g - masked @ c


def fractional_dirac_apply(res: SpectralResolution, alpha: float, coeffs):
    """Apply D^alpha = sum sign(lambda) |lambda|^alpha projections."""
    alpha = _check_alpha(alpha)
    w = res.eigenvalues
    mult = np.where(res.is_kernel(), 0.0, np.sign(w) * np.abs(w) ** alpha)
    return res.apply_function(lambda _: mult, coeffs)


def laplace_power_apply(res: SpectralResolution, power: float, coeffs):
    """Apply Delta^power = |lambda|^(2 power), zero on the kernel.

    Negative powers require a kernel-orthogonal input.
    """
    if power < 0:
        require_kernel_orthogonal(res, coeffs)
    w = np.abs(res.eigenvalues)
    safe = np.where(res.is_kernel(), 1.0, w)
    mult = np.where(res.is_kernel(), 0.0, safe ** (2.0 * power))
    return res.apply_function(lambda _: mult, coeffs)


def poisson_solve(res: SpectralResolution, alpha: float, coeffs) -> np.ndarray:
    """Solve D^alpha u = f for a kernel-orthogonal source f."""
    alpha = _check_alpha(alpha)
    require_kernel_orthogonal(res, coeffs)
    w = res.eigenvalues
    safe = np.where(res.is_kernel(), 1.0, w)
    mult = np.where(
        res.is_kernel(), 0.0, np.sign(safe) * np.abs(safe) ** (-alpha)
    )
    return res.apply_function(lambda _: mult, coeffs)


def source_to_solution(
    res: SpectralResolution, alpha: float, region: Region, coeffs
) -> np.ndarray:
    """The local map f |-> (D^{-alpha} f)|_O.

    The source must be supported in the region (checked on the grid) and
    orthogonal to the kernel.  Returns fiber values at the region's grid
    points, shape (len(region.indices), rank).
    """
    defect = res.basis.support_defect(coeffs, region)
    if defect > SUPPORT_TOL:
        raise SupportViolation(
            f"source leaks outside the region (relative defect {defect:.3e})"
        )
    u = poisson_solve(res, alpha, coeffs)
    return res.basis.restrict(u, region)


def heat_apply(res: SpectralResolution, t: float, coeffs) -> np.ndarray:
    """Heat semigroup e^{-t Delta} with Delta = D^2."""
    if t < 0:
        raise ValueError("heat time must be nonnegative")
    w2 = res.eigenvalues**2
    return res.apply_function(lambda _: np.exp(-t * w2), coeffs)


def heat_kernel_region(res: SpectralResolution, t: float, region: Region):
    """Heat kernel block on region grid points.

    Returns an array of shape (P, P, rank, rank) with P = len(indices),
    K_t(x_p, y_q) as fiber endomorphisms.
    """
    basis = res.basis
    pts = basis.torus.grid_points()[region.indices]
    rank = basis.rank
    phases = np.exp(1j * pts @ basis.kvecs.T) / np.sqrt(basis.volume)
    ev = np.kron(phases, np.eye(rank))  # (P*rank, dim)
    evv = ev @ res.vectors
    weighted = evv * np.exp(-t * res.eigenvalues**2)
    kern = weighted @ evv.conj().T
    p = len(region.indices)
    return kern.reshape(p, rank, p, rank).transpose(0, 2, 1, 3)


@dataclass(frozen=True)
class GammaQuadrature:
    """Trapezoid rule for the Gamma integral in log time.

    Attributes:
        step: grid step in s = log t.
        head: left cutoff L (integration starts at s = -L).
        t_max: right cutoff in physical time.
    """

    step: float
    head: float
    t_max: float

    @classmethod
    def for_spectrum(cls, res: SpectralResolution, alpha: float, step: float = 0.2):
        """Choose cutoffs so head and tail errors stay below 1e-12.

        The head contributes at most e^{-L alpha}/(alpha Gamma(alpha))
        relative to the smallest eigenvalue term; the tail is controlled
        by e^{-lambda_1^2 t_max}.
        """
        w = np.abs(res.eigenvalues)
        lam1 = w[~res.is_kernel()].min()
        head = (32.0 + abs(math.log(alpha))) / alpha
        t_max = 32.0 / lam1**2
        return cls(step=step, head=head, t_max=t_max)

    def nodes(self):
        s = np.arange(-self.head, math.log(self.t_max) + self.step, self.step)
        return s

    def weights(self, alpha: float, mus: np.ndarray) -> np.ndarray:
        """Quadrature values of Gamma(alpha)^{-1} integral for each mu."""
        s = self.nodes()
        t = np.exp(s)
        # integrand after substitution: e^{-t mu} e^{s alpha}
        grid = np.exp(-np.outer(mus, t) + alpha * s[None, :])
        w = np.full(s.shape, self.step)
        w[0] *= 0.5
        w[-1] *= 0.5
        return (grid @ w) / math.gamma(alpha)


def gamma_integral_inverse_power(
    res: SpectralResolution,
    alpha: float,
    coeffs,
    quad: GammaQuadrature | None = None,
) -> np.ndarray:
    """Delta^{-alpha} by heat-semigroup quadrature.

    Requires a kernel-orthogonal input.  Agrees with the spectral inverse
    power to the quadrature tolerance (about 1e-9 at the default step).
    """
    alpha = _check_alpha(alpha)
    require_kernel_orthogonal(res, coeffs)
    if quad is None:
        quad = GammaQuadrature.for_spectrum(res, alpha)
    mus = res.eigenvalues**2
    mask = res.is_kernel()
    factors = quad.weights(alpha, np.where(mask, 1.0, mus))
    factors = np.where(mask, 0.0, factors)
    amps = res.to_eigen(coeffs)
    return res.from_eigen(factors * amps)


def factorization_residual(
    res: SpectralResolution, matrix, alpha: float, coeffs
) -> float:
    """Residual of D^alpha f = D (Delta^{(alpha-1)/2} f), relative to ||f||.

    The right-hand side applies the assembled matrix to the spectrally
    computed half power, so the two routes share no multiplier code.
    Both sides annihilate the kernel, so the input is projected off it
    before the negative half power is taken.
    """
    alpha = _check_alpha(alpha)
    clean = project_off_kernel(res, coeffs)
    direct = fractional_dirac_apply(res, alpha, coeffs)
    half = laplace_power_apply(res, 0.5 * (alpha - 1.0), clean)
    other = np.asarray(matrix) @ half
    scale = max(float(np.linalg.norm(coeffs)), 1e-300)
    return float(np.linalg.norm(direct - other) / scale)
