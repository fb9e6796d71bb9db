"""Weak convergence of the tamed GBM and exponential tamed schemes.

We simulate the scalar cubic benchmark

    dX = (-4 X + X - X^3) dt + 0.1 X dW,   X(0) = 0.5,   T = 1,

and estimate the weak error |E phi(X_T) - E phi(Y_N)| for phi(y) = y^2 with the
self-referenced multilevel estimator: the error at level L is the tail of the
scheme's own ladder of coupled level differences.  Both schemes should show a
slope close to one on a log-log plot of error against step size.

Run:  python demos/01_weak_convergence.py [--samples 10000]
"""

import argparse

from tamedexp import CubicBenchmark, LevelSpec, SchemeKind, make_cubic_problem, weak_error_mlmcsr

parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
parser.add_argument("--samples", type=int, default=4000)
parser.add_argument("--seed", type=int, default=2024)
args = parser.parse_args()

problem = make_cubic_problem(CubicBenchmark(dim=1, beta1=0.1, beta2=0.0))
spec = LevelSpec(n0=8, finest_level=7, samples_per_level=args.samples)

for kind in (SchemeKind.GBM_TAMED, SchemeKind.EXP_TAMED):
    curve = weak_error_mlmcsr(problem, kind, spec, args.seed)
    print(f"\n{kind}  (fitted slope {curve.fitted_slope:.3f})")
    print(f"{'N':>6} {'dt':>10} {'error':>12} {'std err':>12} {'in fit':>7}")
    for n, dt, err, se, used in zip(curve.n_steps, curve.dt, curve.error, curve.std_error, curve.fit_mask):
        print(f"{n:>6d} {dt:>10.5f} {err:>12.4e} {se:>12.4e} {'yes' if used else 'no':>7}")
