"""Fiber frame Gram calibration (delete before commit)."""

import time

import numpy as np

from diraclab.clifford import build_clifford
from diraclab.dirac import (
    DiracBundle,
    assemble_dirac,
    scalar_connection,
    spectral_resolution,
)
from diraclab.geometry import FlatTorusModel, Region, pairwise_distance
from diraclab.recovery import (
    LocalWaveData,
    SourceElement,
    TimeBump,
    blago_kernel,
    bump_train,
    fiber_basis_at_point,
)

TAU = 2.0 * np.pi


def main():
    K = 12
    n = 2 * K + 1
    T = 2.0
    steps = 128
    dt = T / steps
    torus = FlatTorusModel(2, (TAU, TAU), np.eye(2), n)
    module = build_clifford(2, np.eye(2))
    spec = scalar_connection(
        2, 2, {(1, 0): [0.2, 0.1], (0, 1): [0.05 + 0.1j, 0.15]}
    )
    bundle = DiracBundle(torus, module, spec)
    basis, mat = assemble_dirac(bundle, K)
    res = spectral_resolution(basis, mat)

    gp = torus.grid_points()
    h = TAU / n
    x0 = gp[2 * n + 22]
    d0 = pairwise_distance(torus, gp, x0)
    center = x0 + np.array([0.3 * h, -0.6 * h])
    dc = pairwise_distance(torus, gp, center)
    near = np.flatnonzero((dc <= 0.8) | (d0 <= 2.5 * h))
    all_flats = sorted(near.tolist())
    pos_of = {f: i for i, f in enumerate(all_flats)}
    region = Region(torus, center, 1.4)

    w_c = 16 * dt
    sp_c = 12 * dt
    elements = []
    for f in all_flats:
        for b in bump_train(0.1, T, w_c, sp_c):
            for ell in range(2):
                elements.append(SourceElement(point=pos_of[f], fiber=ell, bump=b))
    print(f"points={len(all_flats)}  elements={len(elements)}")

    t0 = time.time()
    data = LocalWaveData.from_resolution(
        res,
        region,
        horizon=T,
        point_indices=np.array(all_flats),
        elements=elements,
        steps_per_horizon=steps,
    )
    kernel = blago_kernel(data)
    print(f"data+kernel: {time.time() - t0:.1f}s")

    x0_flat = 2 * n + 22
    x0_pos = pos_of[x0_flat]
    own = [i for i, e in enumerate(elements) if e.point == x0_pos]
    others = [i for i in range(len(elements)) if elements[i].point != x0_pos]
    for label, ctrl in (("all elements", list(range(len(elements)))), ("no own", others)):
        for beta in (1e-3, 1e-4, 1e-5, 1e-6):
            frame = fiber_basis_at_point(data, kernel, x0_pos, ctrl, beta=beta)
            print(
                f"{label:12s} beta={beta:.0e}  gram defect {frame.gram_defect:.3e}  "
                f"diag {np.diag(frame.gram).real}"
            )


if __name__ == "__main__":
    main()
