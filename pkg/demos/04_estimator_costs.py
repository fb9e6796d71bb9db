"""Four ways to estimate the same weak error curve, and what they cost.

``Trad`` builds an independent reference telescope and a fresh test
telescope per target level.  ``MLMC`` shares one ladder of coupled level
differences per scheme across all targets.  ``MLMCL0`` additionally couples
the two schemes on the coarsest level.  ``MLMCSR`` drops the reference scheme
and reads the error off the tail of the test scheme's own ladder.

All four should agree within their standard errors; their cost, counted in
integrated time steps, is what differs.

Run:  python demos/04_estimator_costs.py
"""

import time

import numpy as np

from tamedexp import CubicBenchmark, LevelSpec, SchemeKind, make_cubic_problem
from tamedexp.mlmc import ESTIMATORS

problem = make_cubic_problem(CubicBenchmark(dim=1))
spec = LevelSpec(n0=8, finest_level=6, samples_per_level=4000)
test, ref = SchemeKind.GBM_TAMED, SchemeKind.EXP_TAMED

curves = {}
for name, estimator in ESTIMATORS.items():
    t0 = time.perf_counter()
    curves[name] = estimator(problem, test, ref, spec, 99)
    elapsed = time.perf_counter() - t0
    print(f"{name:>7}: {curves[name].path_steps:>11,d} path-steps, {elapsed:6.2f} s, "
          f"slope {curves[name].fitted_slope:.3f}")

print(f"\n{'N':>5}" + "".join(f"{name:>22}" for name in curves))
for i, n in enumerate(spec.n_steps(l) for l in range(spec.target_level + 1)):
    cells = "".join(f"{c.estimate[i]:>12.3e} ± {c.std_error[i]:.1e}" for c in curves.values())
    print(f"{n:>5}{cells}")

names = list(curves)
z = max(
    np.max(np.abs(curves[a].estimate - curves[b].estimate) / np.hypot(curves[a].std_error, curves[b].std_error))
    for i, a in enumerate(names) for b in names[i + 1:]
)
print(f"\nlargest pairwise disagreement: {z:.2f} combined standard errors")
