import numpy as np
import pytest

from diraclab.clifford import build_clifford, chirality
from diraclab.dirac import (
    DiracBundle,
    assemble_dirac,
    chirality_matrix,
    connection_values,
    constant_twist,
    scalar_connection,
    spectral_resolution,
    zero_connection,
)
from diraclab.geometry import FlatTorusModel, Region, pairwise_distance
from diraclab.recovery import (
    CutTimeScan,
    GridGauge,
    LocalWaveData,
    SourceElement,
    TimeBump,
    UnitaryMap,
    arrival_time,
    blago_inner_product,
    blago_kernel,
    bump_train,
    chart_difference,
    constant_gauge,
    constant_unitary_map,
    controllability_solve,
    diagonal_winding_map,
    distance_profile,
    exact_state_gram,
    extend_spectral_data,
    fiber_basis_at_point,
    gauge_transform,
    identity_unitary_map,
    ramp_gauge,
    recover_connection,
    recover_cut_time,
    recover_distance,
    source_gram,
    time_average,
    winding_gauge,
)

TAU = 2.0 * np.pi


# -- shared local data set -------------------------------------------------


def nearest_index(torus, target):
    pts = torus.grid_points()
    return int(np.argmin(pairwise_distance(torus, pts, target)))


@pytest.fixture(scope="module")
def data8(res8):
    """Small sealed data set: 4 points, early pulses plus late controls."""
    bundle, basis, mat, res = res8
    torus = bundle.torus
    center = np.array([np.pi, np.pi])
    region = Region(torus, center, 1.2)
    offsets = [(0.0, 0.0), (0.75, 0.0), (0.0, -0.7), (-0.55, 0.5)]
    point_indices = [nearest_index(torus, center + off) for off in offsets]
    horizon = 2.0
    dt = horizon / 256
    elements = []
    for i in range(len(point_indices)):
        elements.append(
            SourceElement(
                point=i, fiber=0, bump=TimeBump(center=9 * dt, width=16 * dt)
            )
        )
    late = []
    for i in range(len(point_indices)):
        for ell in range(2):
            late.append(len(elements))
            elements.append(
                SourceElement(
                    point=i,
                    fiber=ell,
                    bump=TimeBump(center=horizon - 0.3, width=24 * dt),
                )
            )
    shifted = len(elements)
    elements.append(
        SourceElement(
            point=0, fiber=0, bump=TimeBump(center=49 * dt, width=16 * dt)
        )
    )
    data = LocalWaveData.from_resolution(
        res, region, horizon, point_indices, elements, steps_per_horizon=256
    )
    return {
        "res": res,
        "torus": torus,
        "data": data,
        "late": late,
        "shifted": shifted,
        "kernel": blago_kernel(data),
    }


# -- time averaging --------------------------------------------------------


def test_time_average_closed_forms():
    horizon = 1.3
    t = np.linspace(0.0, 2.0 * horizon, 257)
    h = t[1] - t[0]
    half = t[: len(t) // 2 + 1]
    const = time_average(np.ones_like(t), h)
    assert np.abs(const - (horizon - half)).max() < 1e-13
    linear = time_average(t, h)
    assert np.abs(linear - horizon * (horizon - half)).max() < 1e-12


def test_time_average_requires_center_node():
    with pytest.raises(ValueError):
        time_average(np.ones(10), 0.1)


# -- sealed data construction ----------------------------------------------


def test_local_data_rejects_points_outside_region(res8):
    bundle, basis, mat, res = res8
    torus = bundle.torus
    region = Region(torus, (np.pi, np.pi), 0.5)
    outside = nearest_index(torus, np.array([0.0, 0.0]))
    with pytest.raises(ValueError, match="lie in the region"):
        LocalWaveData.from_resolution(
            res,
            region,
            1.0,
            [outside],
            [SourceElement(0, 0, TimeBump(0.2, 0.1))],
            steps_per_horizon=32,
        )


def test_local_data_rejects_bumps_outside_window(res8):
    bundle, basis, mat, res = res8
    torus = bundle.torus
    region = Region(torus, (np.pi, np.pi), 0.5)
    inside = nearest_index(torus, np.array([np.pi, np.pi]))
    with pytest.raises(ValueError, match="within"):
        LocalWaveData.from_resolution(
            res,
            region,
            1.0,
            [inside],
            [SourceElement(0, 0, TimeBump(2.1, 0.5))],
            steps_per_horizon=32,
        )


def test_construction_cross_check_is_tight(data8):
    assert data8["data"].construction_defect < 1e-12


def test_shift_plan_reuses_earliest_solve(data8):
    data = data8["data"]
    shifted = data8["shifted"]
    assert shifted in data._shift_plan
    canon, steps = data._shift_plan[shifted]
    assert canon == 0 and steps == 40
    # the reused response must still match an independent direct solve
    res = data8["res"]
    direct = LocalWaveData.from_resolution(
        res,
        data.region,
        data.horizon,
        data.point_indices,
        [data.elements[shifted]],
        steps_per_horizon=data.grid.steps // 2,
    )
    gap = np.abs(data.response(shifted) - direct.response(0)).max()
    assert gap < 1e-10


# -- local identity ---------------------------------------------------------


def test_blago_kernel_matches_global_state_gram(data8):
    # gaps are measured against source norms, the scale of the identity;
    # the quartic quadrature constant is driven by the narrowest bumps,
    # so the coarse 256-step grid of this fixture sits near 2e-8
    kernel = data8["kernel"]
    exact = exact_state_gram(data8["res"], data8["data"])
    norms = np.sqrt(np.abs(np.diag(source_gram(data8["data"]))))
    gap = np.abs(kernel - exact) / np.outer(norms, norms)
    assert gap.max() < 1e-7


def test_blago_inner_product_bilinearity(data8):
    data = data8["data"]
    exact = exact_state_gram(data8["res"], data)
    sgram = source_gram(data)
    rng = np.random.default_rng(4)
    n = len(data.elements)
    f = rng.normal(size=n) + 1j * rng.normal(size=n)
    g = rng.normal(size=n) + 1j * rng.normal(size=n)
    got = blago_inner_product(data, f, g)
    want = complex(f.conj() @ exact @ g)
    scale = np.sqrt(
        float((f.conj() @ sgram @ f).real) * float((g.conj() @ sgram @ g).real)
    )
    assert abs(got - want) / scale < 1e-9
    with pytest.raises(ValueError):
        blago_inner_product(data, f[:-1], g)


def test_source_gram_matches_fine_quadrature(data8):
    data = data8["data"]
    gram = source_gram(data)
    times = data.grid.times()
    fine = np.linspace(times[0], times[-1], 10 * (len(times) - 1) + 1)
    n = len(data.elements)
    want = np.empty((n, n), dtype=complex)
    flat = data.spatial_coeffs.reshape(-1, data.spatial_coeffs.shape[-1])
    for i in range(n):
        pi = np.interp(fine, times, data._profiles[i])
        ei = data.elements[i]
        for j in range(n):
            pj = np.interp(fine, times, data._profiles[j])
            spatial = np.vdot(
                flat[ei.point * data.rank + ei.fiber],
                flat[
                    data.elements[j].point * data.rank
                    + data.elements[j].fiber
                ],
            )
            want[i, j] = spatial * np.trapz(pi * pj, fine)
    assert np.abs(gram - want).max() < 1e-10 * max(1.0, np.abs(want).max())


# -- travel times ------------------------------------------------------------


def test_arrival_time_threshold_validation(data8):
    data = data8["data"]
    for bad in (0.0, 1.0, -0.2, 1.7):
        with pytest.raises(ValueError):
            arrival_time(data, 0, 0, bad)


def test_recover_distance_requires_source_element(data8):
    data = data8["data"]
    # every element sits at points 0..3, so asking for index 10 must fail
    with pytest.raises(ValueError, match="no source element"):
        recover_distance(data, 10, 0)


def test_recovered_distances_track_geodesics(data8):
    data = data8["data"]
    torus = data8["torus"]
    horizon = data.horizon
    worst = 0.0
    for i in range(len(data.points)):
        for j in range(len(data.points)):
            if i == j:
                continue
            fwd = recover_distance(data, i, j, t_max=horizon)
            back = recover_distance(data, j, i, t_max=horizon)
            true = pairwise_distance(torus, data.points[[j]], data.points[i])[0]
            worst = max(worst, abs(fwd - true))
            assert abs(fwd - back) <= 2.0 * data.grid.dt + 1e-12
    # front thickness at this coarse cutoff dominates the bias
    assert worst < 0.3


def test_distance_profile_is_lipschitz(data8):
    data = data8["data"]
    prof = distance_profile(data, 0, t_max=data.horizon)
    assert prof.values[0] == 0.0
    assert prof.lipschitz_defect(data, data8["torus"]) < 0.15


# -- controllability ---------------------------------------------------------


def test_controllability_input_validation(data8):
    data = data8["data"]
    kernel = data8["kernel"]
    ctrl = data8["late"]
    target = np.zeros((len(data.points), data.rank), dtype=complex)
    with pytest.raises(ValueError, match="vanishes"):
        controllability_solve(data, kernel, ctrl, target)
    target[0, 0] = 1.0
    with pytest.raises(ValueError, match="beta"):
        controllability_solve(data, kernel, ctrl, target, beta=0.0)


def test_controllability_residual_monotone_in_beta(data8):
    data = data8["data"]
    kernel = data8["kernel"]
    ctrl = data8["late"]
    target = np.zeros((len(data.points), data.rank), dtype=complex)
    target[0, 0] = 1.0
    res = [
        controllability_solve(data, kernel, ctrl, target, beta=b)[1]
        for b in (1e-2, 1e-4, 1e-6)
    ]
    assert res[2] <= res[1] + 1e-12 <= res[0] + 2e-12
    assert res[2] < 1.0


def test_fiber_frame_gram_is_orthonormal(data8):
    data = data8["data"]
    frame = fiber_basis_at_point(
        data, data8["kernel"], 0, data8["late"], beta=1e-4
    )
    assert frame.gram.shape == (2, 2)
    assert frame.gram_defect < 1e-6


# -- cut-time certification --------------------------------------------------


class _StubData:
    """Just enough of the sealed interface for the inclusion test."""

    def __init__(self, horizon, elements):
        self.horizon = horizon
        self.elements = tuple(elements)


def _stub_setup():
    horizon = 2.0
    bump = TimeBump(center=1.9, width=0.2)
    elements = [
        SourceElement(point=0, fiber=0, bump=bump),
        SourceElement(point=1, fiber=0, bump=bump),
        SourceElement(point=2, fiber=0, bump=bump),
        SourceElement(point=3, fiber=0, bump=bump),
    ]
    states = np.array(
        [
            [1.0, 0.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [1.0, 1.0, 0.0],
        ],
        dtype=complex,
    )
    kernel = states.conj() @ states.T
    base_distances = np.array([0.1, 0.2, 0.5, 0.6])
    return _StubData(horizon, elements), kernel, base_distances


def test_cut_time_certifies_only_spanned_probes():
    data, kernel, base = _stub_setup()
    scan = recover_cut_time(
        data,
        kernel,
        base,
        ray_points=[[2], [3]],
        s_values=[0.5, 1.0],
        r_values=[0.25],
        beta=1e-9,
        threshold=0.35,
    )
    # the point-2 probe is orthogonal to every control state
    assert scan.residuals[0, 0] > 0.9
    # the point-3 probe lies in the span of the controls
    assert scan.residuals[1, 0] < 1e-3
    assert scan.tau == pytest.approx(1.25)


def test_cut_time_scan_reports_exhaustion():
    data, kernel, base = _stub_setup()
    scan = recover_cut_time(
        data,
        kernel,
        base,
        ray_points=[[2]],
        s_values=[0.5],
        r_values=[0.25],
        threshold=0.35,
    )
    with pytest.raises(ValueError, match="no .s, r. pair"):
        scan.tau
    # a cell with no qualifying probe elements stays unresolved
    empty = recover_cut_time(
        data,
        kernel,
        base,
        ray_points=[[9]],
        s_values=[0.5],
        r_values=[0.25],
    )
    assert np.isnan(empty.residuals[0, 0])


def test_cut_time_picks_smallest_certified_total():
    scan = CutTimeScan(
        s_values=np.array([1.0, 2.0]),
        r_values=np.array([0.25, 0.5]),
        residuals=np.array([[0.9, 0.1], [0.05, 0.02]]),
        threshold=0.3,
    )
    assert scan.tau == pytest.approx(1.5)


# -- gauges ------------------------------------------------------------------


def test_ramp_gauge_is_trivial_on_fattened_region(res8):
    bundle, basis, mat, res = res8
    torus = bundle.torus
    region = Region(torus, (np.pi, np.pi), 1.0)
    gauge = ramp_gauge(torus, region, 2, margin=0.3, width=1.0)
    assert gauge.unitarity_defect() < 1e-12
    assert gauge.identity_defect_on(region) == 0.0
    # order-one somewhere far from the region
    far = nearest_index(torus, np.array([0.0, 0.0]))
    assert np.abs(gauge.values[far] - np.eye(2)).max() > 0.1


def test_ramp_gauge_rejects_non_hermitian_generator(res8):
    bundle, basis, mat, res = res8
    torus = bundle.torus
    region = Region(torus, (np.pi, np.pi), 1.0)
    with pytest.raises(ValueError, match="Hermitian"):
        ramp_gauge(torus, region, 2, generator=np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_grid_gauge_multiplication_is_unitary(res8):
    bundle, basis, mat, res = res8
    gauge = winding_gauge(bundle.torus, 2)
    mu = gauge.multiplication_matrix(basis)
    eye = np.eye(basis.dim)
    assert np.abs(mu.conj().T @ mu - eye).max() < 1e-12


def test_conjugation_preserves_spectrum(res8):
    bundle, basis, mat, res = res8
    torus = bundle.torus
    region = Region(torus, (np.pi, np.pi), 1.0)
    gauge = ramp_gauge(torus, region, 2)
    other, mu = gauge.conjugate_operator(basis, mat)
    w1 = np.sort(np.linalg.eigvalsh(mat))
    w2 = np.sort(np.linalg.eigvalsh(other))
    assert np.abs(w1 - w2).max() < 1e-10 * max(1.0, np.abs(w1).max())


def test_grid_gauge_shape_validation(res8):
    bundle, basis, mat, res = res8
    with pytest.raises(ValueError, match="shape"):
        GridGauge(bundle.torus, np.eye(2))
    gauge = constant_gauge(bundle.torus, np.eye(3))
    with pytest.raises(ValueError, match="rank"):
        gauge.multiplication_matrix(basis)


def test_unitary_map_certificate_rejects_contractions():
    with pytest.raises(ValueError, match="not pointwise unitary"):
        UnitaryMap(2, 2, {(0, 0): 0.5 * np.eye(2)})


def test_unitary_map_composition_and_inverse():
    u = diagonal_winding_map(2, [[1, 0], [0, 1]])
    v = diagonal_winding_map(2, [[-1, 0], [0, -1]])
    w = u.compose(v)
    ident = identity_unitary_map(2, 2)
    frac = np.array([[0.13, 0.71], [0.4, 0.9]])
    gap = np.abs(
        w.values_at_fractions(frac) - ident.values_at_fractions(frac)
    ).max()
    assert gap < 1e-13
    assert u.unitarity_defect() < 1e-13


def test_winding_derivative_matches_closed_form():
    torus = FlatTorusModel(2, (TAU, TAU), np.eye(2), 17)
    u = diagonal_winding_map(2, [[1, 0], [1, 0]])
    pts = np.array([[0.3, 1.1], [2.0, -0.4]])
    du = u.derivative_values(torus, pts)
    vals = u.values(torus, pts)
    want = 1j * vals  # d/dx1 e^{i x1} = i e^{i x1}, period 2 pi
    assert np.abs(du[:, 0] - want).max() < 1e-13
    assert np.abs(du[:, 1]).max() < 1e-13


def test_gauge_transform_matches_pointwise_formula():
    torus = FlatTorusModel(2, (TAU, TAU), np.eye(2), 17)
    module = build_clifford(2, np.eye(2))
    spec = scalar_connection(
        2, 2, {(1, 0): (0.2, 0.1), (0, 1): (0.05 + 0.1j, 0.15)}
    )
    bundle = DiracBundle(torus, module, spec)
    u = diagonal_winding_map(2, [[1, 0], [1, 0]])
    moved = gauge_transform(bundle, u)
    rng = np.random.default_rng(0)
    pts = rng.uniform(-np.pi, np.pi, size=(6, 2))
    got = connection_values(moved.connection, torus, pts)
    uv = u.values(torus, pts)
    du = u.derivative_values(torus, pts)
    av = connection_values(spec, torus, pts)
    uh = uv.conj().transpose(0, 2, 1)
    want = np.einsum("pab,pjbc,pcd->pjad", uv, av, uh) - np.einsum(
        "pjab,pbc->pjac", du, uh
    )
    assert np.abs(got - want).max() < 1e-12


def test_gauge_transform_identity_is_noop():
    torus = FlatTorusModel(2, (TAU, TAU), np.eye(2), 17)
    module = build_clifford(2, np.eye(2))
    spec = constant_twist(2, 2, (0.4, -0.2))
    bundle = DiracBundle(torus, module, spec)
    moved = gauge_transform(bundle, identity_unitary_map(2, 2))
    pts = np.array([[0.0, 0.0], [1.0, 2.0]])
    gap = np.abs(
        connection_values(moved.connection, torus, pts)
        - connection_values(spec, torus, pts)
    ).max()
    assert gap < 1e-13


def test_unequal_windings_break_hermitian_assembly():
    # the transformed connection leaves the commutant, so assembly refuses
    torus = FlatTorusModel(2, (TAU, TAU), np.eye(2), 17)
    module = build_clifford(2, np.eye(2))
    bundle = DiracBundle(torus, module, zero_connection(2, 2))
    moved = gauge_transform(bundle, diagonal_winding_map(2, [[1, 0], [0, 0]]))
    with pytest.raises(ValueError, match="Hermitian"):
        assemble_dirac(moved, 8)


def test_equal_winding_shift_matches_constant_twist():
    torus = FlatTorusModel(2, (TAU, TAU), np.eye(2), 17)
    module = build_clifford(2, np.eye(2))
    bundle = DiracBundle(torus, module, zero_connection(2, 2))
    moved = gauge_transform(bundle, diagonal_winding_map(2, [[1, 0], [1, 0]]))
    twist = constant_twist(2, 2, (-1.0, 0.0))
    pts = np.array([[0.0, 0.0], [0.7, -1.3], [2.5, 2.5]])
    gap = np.abs(
        connection_values(moved.connection, torus, pts)
        - connection_values(twist, torus, pts)
    ).max()
    assert gap < 1e-13


# -- connection charts -------------------------------------------------------


def _scalar_test_bundle(cutoff=8):
    torus = FlatTorusModel(2, (TAU, TAU), np.eye(2), 2 * cutoff + 1)
    module = build_clifford(2, np.eye(2))
    spec = scalar_connection(
        2,
        2,
        {(0, 0): (0.3, -0.1), (1, 0): (0.2, 0.1), (0, 1): (0.05 + 0.1j, 0.15)},
    )
    bundle = DiracBundle(torus, module, spec)
    basis, mat = assemble_dirac(bundle, cutoff)
    return torus, module, spec, bundle, basis, mat


def test_recover_connection_is_exact_for_scalar_fields():
    torus, module, spec, bundle, basis, mat = _scalar_test_bundle()
    pts = np.array([[0.0, 0.0], [1.1, 0.4], [-0.7, 2.3]])
    chart = recover_connection(mat, basis, module, pts)
    truth = connection_values(spec, torus, pts)
    assert chart_difference(chart, truth) < 1e-10


def test_recover_connection_stays_in_commutant():
    torus, module, spec, bundle, basis, mat = _scalar_test_bundle()
    chart = recover_connection(mat, basis, module, np.array([[0.9, -0.6]]))
    for j in range(2):
        block = chart[0, j]
        assert abs(block[0, 1]) < 1e-12 and abs(block[1, 0]) < 1e-12
        assert abs(block[0, 0] - block[1, 1]) < 1e-12


def test_recover_connection_vanishes_without_twist(res8):
    bundle, basis, mat, res = res8
    chart = recover_connection(
        mat, basis, bundle.module, np.array([[0.3, 0.8]])
    )
    assert np.abs(chart).max() < 1e-10


# -- chirality extension ------------------------------------------------------


def test_extension_residuals_vanish(res8):
    bundle, basis, mat, res = res8
    gamma = chirality_matrix(basis, bundle.module)
    ext = extend_spectral_data(res, gamma, count=10)
    assert ext.pair_count() == 10
    assert ext.residuals(mat).max() < 1e-12
    assert ext.orthonormality_defect() < 1e-12


def test_extension_rejects_bad_gradings(res8):
    bundle, basis, mat, res = res8
    gamma = chirality_matrix(basis, bundle.module)
    with pytest.raises(ValueError, match="square"):
        extend_spectral_data(res, 0.5 * gamma, count=4)
    with pytest.raises(ValueError, match="not enough"):
        extend_spectral_data(res, gamma, count=basis.dim)


def test_identity_grading_reflects_nothing(res8):
    # with the trivial grading the reflected pairs stay on the plus side,
    # so every eigen-residual is exactly 2
    bundle, basis, mat, res = res8
    ext = extend_spectral_data(res, np.eye(basis.dim), count=4)
    assert np.abs(ext.residuals(mat) - 2.0).max() < 1e-8


# -- bump trains ---------------------------------------------------------------


def test_bump_train_fills_window():
    bumps = bump_train(0.5, 2.0, 0.2, 0.3)
    assert len(bumps) == 5
    for b in bumps:
        assert b.start >= 0.5 - 1e-12
        assert b.end <= 2.0 + 1e-12
    centers = [b.center for b in bumps]
    assert np.all(np.diff(centers) > 0)


def test_time_bump_validation():
    with pytest.raises(ValueError):
        TimeBump(center=0.5, width=0.0)
    bump = TimeBump(center=0.5, width=0.2)
    t = np.linspace(0.0, 1.0, 201)
    vals = bump.samples(t)
    assert vals.max() > 0
    outside = (t <= bump.start) | (t >= bump.end)
    assert np.abs(vals[outside]).max() == 0.0
