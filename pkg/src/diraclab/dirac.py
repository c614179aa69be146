"""Dirac operators on flat torus bundles.

The operator acts as sum_j cl(dx^j) (d_j + A_j) on the truncated Fourier
basis.  With anti-Hermitian Clifford matrices and an anti-Hermitian
connection that commutes with the Clifford action this matrix is
Hermitian; assembly verifies the fact and rejects incompatible input.
The Galerkin truncation is exact on sections band-limited to K - K_A
when the connection has trig-polynomial degree K_A.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clifford import CliffordModule, chirality
from .fourier import FourierBasis
from .geometry import FlatTorusModel

HERMITICITY_TOL = 1e-12
KERNEL_RTOL = 1e-9


class ConnectionError_(ValueError):
    """Raised for malformed connection coefficient data."""


@dataclass(frozen=True)
class ConnectionSpec:
    """Fourier coefficients of a one-form with endomorphism values.

    `coefficients` maps integer mode tuples q to arrays of shape
    (m, rank, rank): the stack of matrices A_j(q) over the form index j.
    Pointwise anti-Hermiticity of A forces the conjugate symmetry
    A_j(-q) = -A_j(q)^dagger, which is validated on construction.
    """

    dimension: int
    rank: int
    coefficients: dict

    def __post_init__(self):
        clean = {}
        for q, mat in self.coefficients.items():
            q = tuple(int(c) for c in np.atleast_1d(q))
            if len(q) != self.dimension:
                raise ConnectionError_(f"mode {q} has wrong length")
            arr = np.asarray(mat, dtype=complex)
            if arr.shape != (self.dimension, self.rank, self.rank):
                raise ConnectionError_(
                    f"coefficient at {q} must have shape "
                    f"({self.dimension},{self.rank},{self.rank}), got {arr.shape}"
                )
            if np.abs(arr).max() > 0:
                clean[q] = arr
        for q, arr in clean.items():
            neg = tuple(-c for c in q)
            other = clean.get(neg)
            if other is None:
                raise ConnectionError_(f"mode {q} lacks conjugate partner {neg}")
            want = -np.conj(np.transpose(arr, (0, 2, 1)))
            if not np.allclose(other, want, atol=1e-12):
                raise ConnectionError_(
                    f"conjugate symmetry A_j(-q) = -A_j(q)^H fails at {q}"
                )
        object.__setattr__(self, "coefficients", clean)

    @property
    def cutoff(self) -> int:
        """Trig-polynomial degree K_A (max |q|_inf with data)."""
        if not self.coefficients:
            return 0
        return max(max(abs(c) for c in q) for q in self.coefficients)

    def is_zero(self) -> bool:
        return not self.coefficients


def connection_values(
    spec: ConnectionSpec, torus: FlatTorusModel, points
) -> np.ndarray:
    """Evaluate A_j at points of a given torus (fixes the mode scaling)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    out = np.zeros((pts.shape[0], spec.dimension, spec.rank, spec.rank), dtype=complex)
    for q, arr in spec.coefficients.items():
        k = 2.0 * np.pi * np.asarray(q, dtype=float) / np.array(torus.periods)
        out += np.exp(1j * (pts @ k))[:, None, None, None] * arr
    return out


def zero_connection(dimension: int, rank: int) -> ConnectionSpec:
    return ConnectionSpec(dimension, rank, {})


def constant_twist(dimension: int, rank: int, twist) -> ConnectionSpec:
    """Constant scalar connection A_j = i a_j Id for real a_j."""
    a = np.asarray(twist, dtype=float)
    if a.shape != (dimension,):
        raise ConnectionError_("twist must have one real entry per dimension")
    if not np.any(a):
        return zero_connection(dimension, rank)
    stack = 1j * a[:, None, None] * np.eye(rank)[None, :, :]
    zero_mode = (0,) * dimension
    return ConnectionSpec(dimension, rank, {zero_mode: stack})


def scalar_connection(dimension: int, rank: int, modes: dict) -> ConnectionSpec:
    """Scalar connection A_j = i a_j(x) Id from real trig polynomials.

    `modes` maps integer mode tuples q to length-m complex vectors, the
    Fourier coefficients of the a_j; reality demands a_j(-q) = conj(a_j(q))
    and missing partners are filled in automatically.
    """
    eye = np.eye(rank)
    data = {}
    for q, vec in modes.items():
        q = tuple(int(c) for c in np.atleast_1d(q))
        vec = np.asarray(vec, dtype=complex)
        data[q] = vec
        neg = tuple(-c for c in q)
        if neg not in modes:
            data[neg] = np.conj(vec)
    coeffs = {
        q: 1j * vec[:, None, None] * eye[None, :, :] for q, vec in data.items()
    }
    return ConnectionSpec(dimension, rank, coeffs)


@dataclass(frozen=True)
class DiracBundle:
    """Geometric data of a Dirac operator: torus, Clifford module, connection."""

    torus: FlatTorusModel
    module: CliffordModule
    connection: ConnectionSpec

    def __post_init__(self):
        if self.module.dimension != self.torus.dimension:
            raise ValueError("Clifford module dimension mismatch")
        if self.connection.dimension != self.torus.dimension:
            raise ValueError("connection dimension mismatch")
        if self.connection.rank != self.module.rank:
            raise ValueError("connection rank mismatch")


def assemble_dirac(bundle: DiracBundle, cutoff: int) -> tuple:
    """Assemble the Dirac matrix on the Fourier x fiber basis.

    Returns (basis, matrix).  The matrix is dense Hermitian of size
    rank * (2K+1)^m; assembly requires K >= K_A + 1 and checks
    Hermiticity to 1e-12, which fails exactly when the connection does
    not commute with the Clifford action.
    """
    ka = bundle.connection.cutoff
    if cutoff < ka + 1:
        raise ValueError(f"cutoff {cutoff} too small for connection degree {ka}")
    basis = FourierBasis(bundle.torus, cutoff, bundle.module.rank)
    n = bundle.module.rank
    nm = basis.n_modes
    cl_coord = [bundle.module.coordinate_gamma(j) for j in range(bundle.torus.dimension)]

    mat = np.zeros((basis.dim, basis.dim), dtype=complex)
    # diagonal symbol blocks i sum_j k_j cl(dx^j)
    blocks = 1j * np.einsum("nj,jab->nab", basis.kvecs, np.stack(cl_coord))
    view = mat.reshape(nm, n, nm, n)
    idx = np.arange(nm)
    view[idx, :, idx, :] = blocks

    # connection blocks couple mode n to n + q
    width = 2 * cutoff + 1
    strides = np.array([width ** (bundle.torus.dimension - 1 - d)
                        for d in range(bundle.torus.dimension)])
    for q, arr in bundle.connection.coefficients.items():
        hop = np.zeros((n, n), dtype=complex)
        for j in range(bundle.torus.dimension):
            hop += cl_coord[j] @ arr[j]
        target = basis.modes + np.asarray(q, dtype=int)
        ok = np.all(np.abs(target) <= cutoff, axis=1)
        src = idx[ok]
        dst = (target[ok] + cutoff) @ strides
        view[dst, :, src, :] += hop

    herm = np.abs(mat - mat.conj().T).max()
    scale = max(1.0, np.abs(mat).max())
    if herm > HERMITICITY_TOL * scale:
        raise ValueError(
            "assembled operator is not Hermitian; the connection must "
            f"commute with the Clifford action (residual {herm:.3e})"
        )
    mat = 0.5 * (mat + mat.conj().T)
    return basis, mat


@dataclass(frozen=True)
class SpectralResolution:
    """Orthonormal eigendecomposition of an assembled Dirac matrix.

    Eigenvalues are sorted by |lambda| then by sign (negative first);
    `vectors` holds eigenvectors as columns in the same order.
    """

    basis: FourierBasis
    eigenvalues: np.ndarray
    vectors: np.ndarray
    kernel_dim: int = field(init=False)

    def __post_init__(self):
        w = self.eigenvalues
        thresh = KERNEL_RTOL * max(1.0, float(np.abs(w).max()))
        object.__setattr__(self, "kernel_dim", int((np.abs(w) < thresh).sum()))

    @property
    def operator_norm(self) -> float:
        return float(np.abs(self.eigenvalues).max())

    @property
    def kernel_threshold(self) -> float:
        return KERNEL_RTOL * max(1.0, self.operator_norm)

    def is_kernel(self) -> np.ndarray:
        return np.abs(self.eigenvalues) < self.kernel_threshold

    def multiplicities(self, rtol: float = 1e-8):
        """Distinct eigenvalues with multiplicities, as (value, count) pairs."""
        out = []
        scale = max(1.0, self.operator_norm)
        for w in self.eigenvalues:
            if out and abs(w - out[-1][0]) <= rtol * scale:
                out[-1][1] += 1
            else:
                out.append([float(w), 1])
        return [(v, c) for v, c in out]

    def to_eigen(self, coeffs) -> np.ndarray:
        return self.vectors.conj().T @ np.asarray(coeffs, dtype=complex)

    def from_eigen(self, amps) -> np.ndarray:
        return self.vectors @ np.asarray(amps, dtype=complex)

    def apply_function(self, fn, coeffs) -> np.ndarray:
        """Apply the spectral multiplier fn(lambda) to a section."""
        amps = self.to_eigen(coeffs)
        return self.from_eigen(fn(self.eigenvalues) * amps)

    def kernel_projection(self, coeffs) -> np.ndarray:
        mask = self.is_kernel()
        amps = self.to_eigen(coeffs)
        return self.from_eigen(np.where(mask, amps, 0.0))


def spectral_resolution(basis: FourierBasis, matrix) -> SpectralResolution:
    """Full Hermitian eigendecomposition, sorted by |lambda| then sign."""
    matrix = np.asarray(matrix)
    w, v = np.linalg.eigh(matrix)
    order = np.lexsort((w, np.abs(w)))
    return SpectralResolution(basis, w[order], v[:, order])


def chirality_matrix(basis: FourierBasis, module: CliffordModule) -> np.ndarray:
    """Chirality as a matrix on coefficients (fiberwise constant action)."""
    gamma = chirality(module)
    return np.kron(np.eye(basis.n_modes), gamma)


def bochner_compare(bundle: DiracBundle, matrix, basis: FourierBasis) -> float:
    """Compare the second-order part of D^2 against |k|^2_g Id.

    Along each sampled mode ray the diagonal block of D^2 is a quadratic
    matrix polynomial in the step; its leading coefficient is extracted by
    exact second differences and compared to the symbol.  Returns the max
    relative deviation.
    """
    sq = matrix @ matrix
    n = bundle.module.rank
    nm = basis.n_modes
    view = sq.reshape(nm, n, nm, n)
    m = bundle.torus.dimension
    rays = [tuple(int(i == d) for i in range(m)) for d in range(m)]
    if m >= 2:
        rays.append((1,) * m)
    interior = basis.cutoff - bundle.connection.cutoff
    worst = 0.0
    ginv = bundle.torus.metric_inv
    for ray in rays:
        step = max(abs(c) for c in ray)
        jmax = interior // step
        if jmax < 3:
            raise ValueError("cutoff too small to fit a quadratic along a ray")
        blocks = []
        for j in (jmax - 2, jmax - 1, jmax):
            node = tuple(j * c for c in ray)
            i = basis.mode_index(node)
            blocks.append(view[i, :, i, :])
        lead = 0.5 * (blocks[2] - 2 * blocks[1] + blocks[0])
        kray = 2.0 * np.pi * np.asarray(ray, dtype=float) / np.array(bundle.torus.periods)
        target = float(kray @ ginv @ kray)
        dev = np.abs(lead - target * np.eye(n)).max() / target
        worst = max(worst, float(dev))
    return worst
