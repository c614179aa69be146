import numpy as np
import pytest

from conftest import TAU, make_untwisted, random_spd
from diraclab.clifford import build_clifford
from diraclab.dirac import (
    ConnectionError_,
    ConnectionSpec,
    DiracBundle,
    assemble_dirac,
    bochner_compare,
    chirality_matrix,
    connection_values,
    constant_twist,
    scalar_connection,
    spectral_resolution,
    zero_connection,
)
from diraclab.fourier import FourierBasis, gaussian_bump_coeffs, inner
from diraclab.geometry import FlatTorusModel, Region


def block(mat, basis, n):
    i = basis.mode_index(n)
    r = basis.rank
    return mat.reshape(basis.n_modes, r, basis.n_modes, r)[i, :, i, :]


def test_mode_block_frozen_eigenvalues(res8):
    _, basis, mat, _ = res8
    eigs = np.linalg.eigvalsh(block(mat, basis, (1, 0)))
    assert np.allclose(eigs, [-1.0, 1.0], atol=1e-12)
    eigs2 = np.linalg.eigvalsh(block(mat, basis, (3, -4)))
    assert np.allclose(eigs2, [-5.0, 5.0], atol=1e-12)


def test_hermitian_and_kernel(res8):
    _, basis, mat, res = res8
    assert np.abs(mat - mat.conj().T).max() <= 1e-12
    assert res.kernel_dim == 2
    nz = np.abs(res.eigenvalues)[res.kernel_dim :]
    assert nz.min() == pytest.approx(1.0, abs=1e-12)


def test_plus_minus_multiplicities_match(res8):
    _, _, _, res = res8
    w = res.eigenvalues
    plus = int((np.abs(w - 1.0) < 1e-9).sum())
    minus = int((np.abs(w + 1.0) < 1e-9).sum())
    assert plus == minus == 4
    # global symmetry of the spectrum
    assert np.allclose(np.sort(w), -np.sort(-w)[::-1], atol=1e-10)


def test_eigenbasis_unitary_and_residual(res8):
    _, _, mat, res = res8
    v = res.vectors
    assert np.abs(v.conj().T @ v - np.eye(v.shape[1])).max() <= 1e-10
    resid = np.abs(mat @ v - v * res.eigenvalues).max()
    assert resid <= 1e-10 * res.operator_norm


def test_twisted_block_eigenvalues():
    torus = FlatTorusModel(2, (TAU, TAU), np.eye(2), 11)
    mod = build_clifford(2, np.eye(2))
    a = np.array([0.3, -0.1])
    bundle = DiracBundle(torus, mod, constant_twist(2, 2, a))
    basis, mat = assemble_dirac(bundle, 5)
    for n in [(0, 0), (1, 0), (-2, 3)]:
        want = np.linalg.norm(np.array(n, float) + a)
        eigs = np.linalg.eigvalsh(block(mat, basis, n))
        assert np.allclose(eigs, [-want, want], atol=1e-12)
    res = spectral_resolution(basis, mat)
    assert res.kernel_dim == 0


def test_twisted_block_with_metric():
    rng = np.random.default_rng(2)
    g = random_spd(rng, 2)
    torus = FlatTorusModel(2, (TAU, 1.5 * TAU), g, 11)
    mod = build_clifford(2, g)
    a = np.array([0.2, 0.4])
    bundle = DiracBundle(torus, mod, constant_twist(2, 2, a))
    basis, mat = assemble_dirac(bundle, 5)
    ginv = np.linalg.inv(g)
    for n in [(1, 0), (2, -1)]:
        k = 2 * np.pi * np.array(n, float) / np.array(torus.periods)
        shifted = k + a
        want = np.sqrt(shifted @ ginv @ shifted)
        eigs = np.linalg.eigvalsh(block(mat, basis, n))
        assert np.allclose(eigs, [-want, want], atol=1e-12)


def test_galerkin_exact_on_bandlimited():
    """D agrees with a finer-cutoff assembly on low-mode sections."""
    torus = FlatTorusModel(2, (TAU, TAU), np.eye(2), 27)
    mod = build_clifford(2, np.eye(2))
    conn = scalar_connection(2, 2, {(1, 0): [0.2, 0.0], (1, 1): [0.05, -0.1]})
    bundle = DiracBundle(torus, mod, conn)
    ka = conn.cutoff
    assert ka == 1
    basis, mat = assemble_dirac(bundle, 6)
    torus_fine = FlatTorusModel(2, (TAU, TAU), np.eye(2), 27)
    bundle_fine = DiracBundle(torus_fine, mod, conn)
    basis_f, mat_f = assemble_dirac(bundle_fine, 9)
    rng = np.random.default_rng(8)
    c = np.zeros(basis.dim, dtype=complex)
    for n in [(0, 0), (2, 1), (-3, -4), (5, 0)]:
        if max(abs(v) for v in n) <= basis.cutoff - ka:
            for ell in range(2):
                c[basis.flat_index(n, ell)] = rng.standard_normal() + 1j
    out = mat @ c
    c_f = np.zeros(basis_f.dim, dtype=complex)
    for i in range(basis.n_modes):
        n = tuple(basis.modes[i])
        for ell in range(2):
            c_f[basis_f.flat_index(n, ell)] = c[i * 2 + ell]
    out_f = mat_f @ c_f
    # compare on the coarse modes; fine result must also stay in band
    for i in range(basis.n_modes):
        n = tuple(basis.modes[i])
        for ell in range(2):
            assert out[i * 2 + ell] == pytest.approx(
                out_f[basis_f.flat_index(n, ell)], abs=1e-12
            )


def test_bochner_untwisted_and_twisted(res8):
    bundle, basis, mat, _ = res8
    assert bochner_compare(bundle, mat, basis) <= 1e-10
    torus = bundle.torus
    conn = scalar_connection(2, 2, {(1, 0): [0.2, 0.0], (0, 2): [0.0, 0.3]})
    b2 = DiracBundle(torus, bundle.module, conn)
    basis2, mat2 = assemble_dirac(b2, 8)
    assert bochner_compare(b2, mat2, basis2) <= 1e-10
    # lower order terms present: D^2 has off-diagonal mode coupling
    sq = mat2 @ mat2
    view = sq.reshape(basis2.n_modes, 2, basis2.n_modes, 2)
    i, j = basis2.mode_index((1, 0)), basis2.mode_index((2, 0))
    assert np.abs(view[i, :, j, :]).max() > 1e-3


def test_parseval(res8):
    _, basis, _, res = res8
    rng = np.random.default_rng(1)
    f = basis.random_section(rng)
    g = basis.random_section(rng)
    direct = inner(f, g)
    amps = np.vdot(res.to_eigen(f), res.to_eigen(g))
    assert direct == pytest.approx(amps, abs=1e-10 * np.linalg.norm(f) / 1)


def test_chirality_anticommutes_and_pairs(res8):
    bundle, basis, mat, res = res8
    gam = chirality_matrix(basis, bundle.module)
    assert np.abs(gam @ mat @ gam + mat).max() <= 1e-12
    # eigenpair mapping lambda -> -lambda
    for i in range(res.kernel_dim, res.kernel_dim + 6):
        lam = res.eigenvalues[i]
        v = res.vectors[:, i]
        w = gam @ v
        assert np.linalg.norm(mat @ w + lam * w) <= 1e-9 * res.operator_norm


def test_connection_validation_errors():
    eye = np.eye(2)
    good = 1j * 0.3 * np.stack([eye, eye])
    with pytest.raises(ConnectionError_):
        # missing conjugate partner
        ConnectionSpec(2, 2, {(1, 0): good})
    with pytest.raises(ConnectionError_):
        # Hermitian-valued data violates the anti-Hermitian symmetry
        real_coeff = 0.3 * np.stack([eye, eye]).astype(complex)
        ConnectionSpec(2, 2, {(1, 0): real_coeff, (-1, 0): real_coeff})
    with pytest.raises(ConnectionError_):
        ConnectionSpec(2, 2, {(1, 0, 0): np.zeros((2, 2, 2))})
    with pytest.raises(ConnectionError_):
        ConnectionSpec(2, 2, {(1, 0): np.zeros((3, 2, 2))})
    with pytest.raises(ConnectionError_):
        constant_twist(2, 2, [0.1, 0.2, 0.3])


def test_assembly_rejects_small_cutoff_and_incompatible():
    torus = FlatTorusModel(2, (TAU, TAU), np.eye(2), 21)
    mod = build_clifford(2, np.eye(2))
    conn = scalar_connection(2, 2, {(3, 0): [0.1, 0.0]})
    bundle = DiracBundle(torus, mod, conn)
    with pytest.raises(ValueError):
        assemble_dirac(bundle, 3)
    # anti-Hermitian but not commuting with the Clifford action
    bad = np.zeros((2, 2, 2), dtype=complex)
    bad[0] = 1j * np.diag([1.0, -1.0])
    spec = ConnectionSpec(2, 2, {(0, 0): bad})
    with pytest.raises(ValueError, match="Hermitian"):
        assemble_dirac(DiracBundle(torus, mod, spec), 4)


def test_connection_values_evaluation():
    torus = FlatTorusModel(2, (TAU, TAU), np.eye(2), 16)
    conn = scalar_connection(2, 2, {(1, 0): [0.25, 0.0]})
    pts = np.array([[0.0, 0.0], [0.7, 1.3]])
    vals = connection_values(conn, torus, pts)
    want = 1j * 2 * 0.25 * np.cos(pts[:, 0])
    assert np.allclose(vals[:, 0, 0, 0], want, atol=1e-13)
    assert np.allclose(vals[:, 1], 0.0, atol=1e-14)


def test_grid_roundtrip_and_restrict(res8):
    _, basis, _, _ = res8
    rng = np.random.default_rng(12)
    c = basis.random_section(rng)
    assert np.abs(basis.from_grid(basis.to_grid(c)) - c).max() <= 1e-10
    region = Region(basis.torus, np.array([1.0, 1.0]), 0.9)
    vals = basis.restrict(c, region)
    assert vals.shape == (len(region.indices), 2)
    pts = basis.torus.grid_points()[region.indices]
    direct = basis.evaluate(c, pts)
    assert np.abs(vals - direct).max() <= 1e-10


def test_gaussian_bump_properties(res8):
    _, basis, _, _ = res8
    center = np.array([2.0, 3.0])
    c = gaussian_bump_coeffs(basis, center, sigma=0.5)
    val = basis.evaluate(c, center)
    assert val[0, 0] == pytest.approx(1.0, abs=1e-12)
    assert abs(val[0, 1]) <= 1e-14
    far = basis.evaluate(c, center + np.array([np.pi, np.pi]))
    assert abs(far[0, 0]) < 5e-3
