"""Gauge-pair determination calibration (delete before commit)."""

import numpy as np

from diraclab.clifford import build_clifford
from diraclab.dirac import (
    DiracBundle,
    assemble_dirac,
    connection_values,
    scalar_connection,
    spectral_resolution,
)
from diraclab.fractional import localized_orthogonal_source, source_to_solution
from diraclab.geometry import FlatTorusModel, Region
from diraclab.recovery import chart_difference, ramp_gauge, recover_connection

TAU = 2.0 * np.pi


def random_band1_connection(rng, m=2, n=2):
    modes = {(0,) * m: rng.normal(size=m) * 0.3}
    for q in [(1, 0), (0, 1), (1, 1)]:
        modes[q] = 0.25 * (rng.normal(size=m) + 1j * rng.normal(size=m))
    return scalar_connection(m, n, modes)


def main():
    K = 12
    rng = np.random.default_rng(7)
    torus = FlatTorusModel(2, (TAU, TAU), np.eye(2), 2 * K + 1)
    module = build_clifford(2, np.eye(2))
    spec = random_band1_connection(rng)
    bundle = DiracBundle(torus, module, spec)
    basis, mat1 = assemble_dirac(bundle, K)
    region = Region(torus, (0.0, 0.0), 1.0)

    # chart exactness against the defining coefficients
    pts = np.array([[0.0, 0.0], [0.35, -0.2], [-0.5, 0.45], [0.8, 0.1]])
    a_true = connection_values(spec, torus, pts)
    a_rec = recover_connection(mat1, basis, module, pts)
    print(f"chart vs truth: {chart_difference(a_rec, a_true):.3e}")

    res1 = spectral_resolution(basis, mat1)
    for margin, width in [(0.35, 0.9), (0.5, 1.2), (0.3, 1.6), (0.2, 1.9)]:
        gauge = ramp_gauge(torus, region, 2, margin=margin, width=width)
        mat2, mu = gauge.conjugate_operator(basis, mat1)
        print(
            f"margin={margin} width={width}  "
            f"unitary defect {np.abs(mu.conj().T @ mu - np.eye(basis.dim)).max():.2e}  "
            f"Id-on-O defect {gauge.identity_defect_on(region):.2e}"
        )
        res2 = spectral_resolution(basis, mat2)
        # source-to-solution agreement on O for region-supported sources
        worst = 0.0
        gp = torus.grid_points()
        inside = region.indices
        for _ in range(4):
            vals = np.zeros((len(gp), 2), dtype=complex)
            vals[inside] = rng.normal(size=(len(inside), 2)) + 1j * rng.normal(
                size=(len(inside), 2)
            )
            f = localized_orthogonal_source(res1, region, basis.from_grid(vals))
            u1 = source_to_solution(res1, 0.5, region, f)
            u2 = source_to_solution(res2, 0.5, region, f)
            worst = max(worst, np.abs(u1 - u2).max() / np.abs(u1).max())
        print(f"  map agreement on O: {worst:.3e}")
        a2 = recover_connection(mat2, basis, module, pts)
        print(f"  chart agreement:    {chart_difference(a2, a_rec):.3e}")


if __name__ == "__main__":
    main()
