"""Distance recovery calibration at K=16."""
import itertools
import time

import numpy as np

from diraclab.clifford import build_clifford
from diraclab.dirac import DiracBundle, assemble_dirac, spectral_resolution, zero_connection
from diraclab.geometry import FlatTorusModel, Region, geodesic_distance
from diraclab.recovery import LocalWaveData, SourceElement, TimeBump, recover_distance

TAU = 2.0 * np.pi
K = 16
T = 2.2
STEPS = 512
DT = T / STEPS
EPS = 0.1

t0 = time.perf_counter()
torus = FlatTorusModel(2, (TAU, TAU), np.eye(2), 2 * K + 1)
module = build_clifford(2, np.eye(2))
bundle = DiracBundle(torus, module, zero_connection(2, 2))
basis, mat = assemble_dirac(bundle, K)
res = spectral_resolution(basis, mat)
t1 = time.perf_counter()
print(f"eigensolve: {t1 - t0:.1f}s  dim {basis.dim}")

region = Region(torus, np.array([np.pi, np.pi]), 1.0)
all_pts = torus.grid_points()
rng = np.random.default_rng(11)
# spread 5 points: center plus offsets
target = np.array(
    [
        [np.pi, np.pi],
        [np.pi + 0.8, np.pi],
        [np.pi, np.pi - 0.75],
        [np.pi - 0.6, np.pi + 0.55],
        [np.pi + 0.5, np.pi + 0.65],
    ]
)
picks = []
for t in target:
    d = np.linalg.norm(all_pts - t, axis=1)
    picks.append(int(np.argmin(d)))
picks = np.array(sorted(set(picks)))
print("points:", all_pts[picks])

width = 16 * DT
elements = [
    SourceElement(point=i, fiber=0, bump=TimeBump(center=width / 2 + DT, width=width))
    for i in range(len(picks))
]
data = LocalWaveData.from_resolution(res, region, T, picks, elements, steps_per_horizon=STEPS)
t2 = time.perf_counter()
print(f"data build: {t2 - t1:.1f}s  construction defect {data.construction_defect:.2e}")

bound = 2 * EPS + 2 * DT
worst = 0.0
for thresh in (0.2, 0.3, 0.4, 0.5):
    errs = []
    asym = []
    for i, j in itertools.combinations(range(len(picks)), 2):
        d_oracle = geodesic_distance(torus, all_pts[picks[i]], all_pts[picks[j]])
        d_ij = recover_distance(data, i, j, threshold=thresh)
        d_ji = recover_distance(data, j, i, threshold=thresh)
        errs.append(abs(d_ij - d_oracle))
        errs.append(abs(d_ji - d_oracle))
        asym.append(abs(d_ij - d_ji))
    print(
        f"threshold {thresh:.2f}: max err {max(errs):.4f} "
        f"(bound {bound:.4f})  max asym {max(asym):.4f} (2dt {2*DT:.4f})"
    )
t3 = time.perf_counter()
print(f"recovery: {t3 - t2:.1f}s  total {t3 - t0:.1f}s")
