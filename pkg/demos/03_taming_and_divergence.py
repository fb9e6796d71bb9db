"""Why taming is needed: explicit Euler explodes on a cubic drift.

With F(x) = x - x^3, x0 = 3 and dt = 0.5 the plain Euler iterates are
3, -9, 351, ... and overflow within a handful of steps.  Taming replaces F by
F / (1 + dt |F|), which caps the drift increment at 1 in norm, and the
iteration stays bounded.  Even with noise, the tamed schemes keep every path
finite while Euler-Maruyama loses them.

Run:  python demos/03_taming_and_divergence.py
"""

import numpy as np

from tamedexp import IncrementGrid, LinearPart, SdeProblem, SchemeKind, generate_batch, integrate


def cubic(x):
    return x - x**3


def zero(x):
    return np.zeros_like(x)


problem = SdeProblem(LinearPart([[0.0]], ([[0.0]],)), cubic, (zero,), [3.0], horizon=5.0)
grid = IncrementGrid(0.5, np.zeros((1, 10)))
for kind in (SchemeKind.EULER_MARUYAMA, SchemeKind.TAMED_EULER, SchemeKind.GBM_TAMED):
    res = integrate(problem, kind, grid)
    print(f"{str(kind):>14}: max |Y_n| = {res.max_norm:.4g}, finite = {res.finite}")

print("\nnoisy version: dX = (X - X^3) dt + 0.6 X dW on [0, 10], 20 steps, 2000 paths")
noisy = SdeProblem(LinearPart([[0.0]], ([[0.6]],)), cubic, (zero,), [1.0], horizon=10.0)
paths = generate_batch(1, 0, 0, 2000, 1, 20, 0.5)
for kind in SchemeKind:
    res = integrate(noisy, kind, paths)
    print(f"{str(kind):>14}: {np.count_nonzero(~res.finite):>4d} of 2000 paths overflowed")
