"""Blago kernel accuracy scan after the kink correction."""
import time

import numpy as np

from diraclab.clifford import build_clifford
from diraclab.dirac import (
    DiracBundle,
    assemble_dirac,
    spectral_resolution,
    zero_connection,
)
from diraclab.geometry import FlatTorusModel, Region
from diraclab.recovery import (
    LocalWaveData,
    SourceElement,
    TimeBump,
    blago_kernel,
    exact_state_gram,
    source_gram,
)

TAU = 2.0 * np.pi


def setup(cutoff, horizon, steps, widths, seed=7):
    torus = FlatTorusModel(2, (TAU, TAU), np.eye(2), 2 * cutoff + 1)
    module = build_clifford(2, np.eye(2))
    bundle = DiracBundle(torus, module, zero_connection(2, 2))
    basis, mat = assemble_dirac(bundle, cutoff)
    res = spectral_resolution(basis, mat)
    region = Region(torus, np.array([3.0, 3.0]), 1.2)
    rng = np.random.default_rng(seed)
    pick = rng.choice(region.indices, size=6, replace=False)
    elements = []
    for k in range(24):
        width = widths[k % len(widths)]
        center = float(rng.uniform(width / 2 + 0.05, horizon - width / 2 - 0.05))
        elements.append(
            SourceElement(
                point=int(k % len(pick)),
                fiber=int(rng.integers(2)),
                bump=TimeBump(center=center, width=width),
            )
        )
    data = LocalWaveData.from_resolution(
        res, region, horizon, pick, elements, steps_per_horizon=steps
    )
    return res, data


def scan(cutoff, horizon, steps, widths):
    res, data = setup(cutoff, horizon, steps, widths)
    t0 = time.perf_counter()
    q = blago_kernel(data)
    t1 = time.perf_counter()
    p = exact_state_gram(res, data)
    g = source_gram(data)
    norms = np.sqrt(np.diag(g).real)
    scale = np.outer(norms, norms)
    err = np.abs(q - p) / scale
    i, j = np.unravel_index(np.argmax(err), err.shape)
    print(
        f"K={cutoff} steps={steps} widths={widths}: "
        f"max entrywise {err.max():.3e} at ({i},{j})  kernel {t1 - t0:.2f}s"
    )
    return err.max()


if __name__ == "__main__":
    dt512 = 2.0 / 512
    base_widths = (16 * dt512, 24 * dt512, 48 * dt512)
    for steps in (256, 512, 1024):
        scan(8, 2.0, steps, base_widths)
    scan(8, 2.0, 512, (0.3, 0.45, 0.6))
    scan(12, 2.0, 512, base_widths)
