import numpy as np
import pytest

from diraclab.clifford import build_clifford
from diraclab.dirac import (
    DiracBundle,
    assemble_dirac,
    spectral_resolution,
    zero_connection,
)
from diraclab.geometry import FlatTorusModel

TAU = 2.0 * np.pi


def make_untwisted(cutoff: int, grid_n: int | None = None):
    if grid_n is None:
        grid_n = 2 * cutoff + 1
    torus = FlatTorusModel(2, (TAU, TAU), np.eye(2), grid_n)
    module = build_clifford(2, np.eye(2))
    bundle = DiracBundle(torus, module, zero_connection(2, 2))
    basis, mat = assemble_dirac(bundle, cutoff)
    return bundle, basis, mat


@pytest.fixture(scope="session")
def res8():
    bundle, basis, mat = make_untwisted(8)
    return bundle, basis, mat, spectral_resolution(basis, mat)


@pytest.fixture(scope="session")
def res16():
    bundle, basis, mat = make_untwisted(16)
    return bundle, basis, mat, spectral_resolution(basis, mat)


def random_spd(rng, m: int, cond: float = 4.0) -> np.ndarray:
    """Random SPD matrix with condition number at most `cond`."""
    q, _ = np.linalg.qr(rng.standard_normal((m, m)))
    eigs = np.exp(rng.uniform(0.0, np.log(cond), size=m))
    eigs = eigs / eigs.min()
    return (q * eigs) @ q.T
