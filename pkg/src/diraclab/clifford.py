"""Clifford modules over flat tori.

Gamma matrices satisfy c_j c_k + c_k c_j = -2 delta_jk Id and are
anti-Hermitian for the standard fiber metric.  A constant metric G is
handled by precomputing the Cholesky orthonormalizer: covector components
theta transform to L^{-1} theta where G = L L^T, after which the flat
relations apply verbatim.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PAULI = (
    np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex),
    np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex),
    np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex),
)


@dataclass(frozen=True)
class CliffordModule:
    """Clifford action data for a flat torus of dimension m.

    Attributes:
        dimension: base dimension m.
        rank: fiber rank n.
        gammas: tuple of anti-Hermitian n x n matrices for an orthonormal
            coframe.
        orthonormalizer: L^{-1} with G = L L^T; maps coordinate covector
            components to orthonormal ones.
        fiber_metric: Hermitian inner product on the fiber (identity here).
    """

    dimension: int
    rank: int
    gammas: tuple
    orthonormalizer: np.ndarray
    fiber_metric: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.fiber_metric is None:
            object.__setattr__(self, "fiber_metric", np.eye(self.rank, dtype=complex))

    def coordinate_gamma(self, j: int) -> np.ndarray:
        """Clifford matrix of the coordinate covector dx^j."""
        linv = self.orthonormalizer
        out = np.zeros((self.rank, self.rank), dtype=complex)
        for a in range(self.dimension):
            out += linv[a, j] * self.gammas[a]
        return out


def build_clifford(dimension: int, metric) -> CliffordModule:
    """Construct the rank-minimal Clifford module for m in {1, 2}.

    m = 1 uses the 1 x 1 matrix (i); m = 2 uses c_j = i * Pauli_j.
    """
    metric = np.asarray(metric, dtype=float)
    if metric.shape != (dimension, dimension):
        raise ValueError("metric shape does not match dimension")
    chol = np.linalg.cholesky(metric)
    orthonormalizer = np.linalg.inv(chol)
    if dimension == 1:
        gammas = (np.array([[1.0j]]),)
        rank = 1
    elif dimension == 2:
        gammas = (1.0j * PAULI[0], 1.0j * PAULI[1])
        rank = 2
    else:
        raise ValueError("only dimensions 1 and 2 are supported")
    return CliffordModule(
        dimension=dimension,
        rank=rank,
        gammas=gammas,
        orthonormalizer=orthonormalizer,
    )


def clifford_matrix(module: CliffordModule, theta) -> np.ndarray:
    """Matrix of Clifford multiplication by the covector theta."""
    theta = np.asarray(theta, dtype=float)
    hat = module.orthonormalizer @ theta
    out = np.zeros((module.rank, module.rank), dtype=complex)
    for a in range(module.dimension):
        out += hat[a] * module.gammas[a]
    return out


def clifford_mult(module: CliffordModule, theta, v) -> np.ndarray:
    """Apply cl(theta) to a fiber vector."""
    return clifford_matrix(module, theta) @ np.asarray(v, dtype=complex)


def chirality(module: CliffordModule) -> np.ndarray:
    """Chirality operator i^(m/2) c_1 ... c_m for even m.

    Squares to the identity, is Hermitian, and anticommutes with every
    gamma.  Odd dimensions have no such operator (the product is central)
    and are rejected.
    """
    m = module.dimension
    if m % 2 != 0:
        raise ValueError("chirality requires an even dimension")
    out = np.eye(module.rank, dtype=complex)
    for g in module.gammas:
        out = out @ g
    out = (1.0j) ** (m // 2) * out
    return out


def anticommutation_residual(module: CliffordModule) -> float:
    """Max deviation of c_j c_k + c_k c_j from -2 delta_jk Id."""
    worst = 0.0
    eye = np.eye(module.rank)
    for j, cj in enumerate(module.gammas):
        for k, ck in enumerate(module.gammas):
            target = -2.0 * eye if j == k else 0.0
            worst = max(worst, float(np.abs(cj @ ck + ck @ cj - target).max()))
    return worst


def antihermitian_residual(module: CliffordModule) -> float:
    """Max deviation of the gammas from anti-Hermiticity in h_E."""
    h = module.fiber_metric
    worst = 0.0
    for c in module.gammas:
        worst = max(worst, float(np.abs(h @ c + c.conj().T @ h).max()))
    return worst
