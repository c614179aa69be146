import numpy as np
import pytest

from conftest import random_spd
from diraclab.clifford import (
    anticommutation_residual,
    antihermitian_residual,
    build_clifford,
    chirality,
    clifford_matrix,
    clifford_mult,
)


def test_relations_identity_metric():
    mod = build_clifford(2, np.eye(2))
    assert anticommutation_residual(mod) <= 1e-12
    assert antihermitian_residual(mod) <= 1e-12
    for c in mod.gammas:
        assert np.allclose(c @ c, -np.eye(2), atol=1e-12)


def test_relations_random_metrics():
    rng = np.random.default_rng(0)
    for _ in range(20):
        g = random_spd(rng, 2)
        mod = build_clifford(2, g)
        assert anticommutation_residual(mod) <= 1e-12
        assert antihermitian_residual(mod) <= 1e-12
        # cl(theta)^2 = -|theta|^2 with the covector norm
        theta = rng.standard_normal(2)
        cm = clifford_matrix(mod, theta)
        want = theta @ np.linalg.inv(g) @ theta
        assert np.abs(cm @ cm + want * np.eye(2)).max() <= 1e-12 * max(1.0, want)


def test_coordinate_gammas_anticommute_to_inverse_metric():
    rng = np.random.default_rng(4)
    g = random_spd(rng, 2)
    mod = build_clifford(2, g)
    ginv = np.linalg.inv(g)
    for j in range(2):
        for k in range(2):
            cj = mod.coordinate_gamma(j)
            ck = mod.coordinate_gamma(k)
            assert np.allclose(
                cj @ ck + ck @ cj, -2.0 * ginv[j, k] * np.eye(2), atol=1e-12
            )


def test_dimension_one():
    mod = build_clifford(1, np.array([[1.0]]))
    assert mod.rank == 1
    assert mod.gammas[0] == pytest.approx(1j)
    assert anticommutation_residual(mod) <= 1e-15
    with pytest.raises(ValueError):
        chirality(mod)


def test_dimension_three_rejected():
    with pytest.raises(ValueError):
        build_clifford(3, np.eye(3))


def test_chirality_frozen_value():
    mod = build_clifford(2, np.eye(2))
    gamma = chirality(mod)
    assert np.allclose(gamma, np.diag([1.0, -1.0]), atol=1e-15)


def test_chirality_properties():
    rng = np.random.default_rng(9)
    for _ in range(10):
        mod = build_clifford(2, random_spd(rng, 2))
        gamma = chirality(mod)
        assert np.abs(gamma @ gamma - np.eye(2)).max() <= 1e-12
        assert np.abs(gamma - gamma.conj().T).max() <= 1e-12
        for c in mod.gammas:
            assert np.abs(gamma @ c + c @ gamma).max() <= 1e-12


def test_frame_covariance_under_orthogonal_change():
    """Rebuilding with G' = R^T G R keeps the gamma and chirality spectra."""
    rng = np.random.default_rng(13)
    g = random_spd(rng, 2)
    q, _ = np.linalg.qr(rng.standard_normal((2, 2)))
    g2 = q.T @ g @ q
    m1 = build_clifford(2, g)
    m2 = build_clifford(2, g2)
    for c1, c2 in zip(m1.gammas, m2.gammas):
        s1 = np.sort_complex(np.linalg.eigvals(c1))
        s2 = np.sort_complex(np.linalg.eigvals(c2))
        assert np.allclose(s1, s2, atol=1e-12)
    s1 = np.sort(np.linalg.eigvalsh(chirality(m1)))
    s2 = np.sort(np.linalg.eigvalsh(chirality(m2)))
    assert np.allclose(s1, s2, atol=1e-12)


def test_clifford_mult_linear():
    rng = np.random.default_rng(21)
    mod = build_clifford(2, random_spd(rng, 2))
    th1, th2 = rng.standard_normal(2), rng.standard_normal(2)
    v = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    lhs = clifford_mult(mod, th1 + 0.5 * th2, v)
    rhs = clifford_mult(mod, th1, v) + 0.5 * clifford_mult(mod, th2, v)
    assert np.allclose(lhs, rhs, atol=1e-12)
