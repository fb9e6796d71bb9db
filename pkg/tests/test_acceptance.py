"""Acceptance criteria for the tamed GBM package.

Each ``criterion_*`` function runs one experiment at the stated protocol and
tolerance and returns ``(passed, detail)``.  Under pytest every criterion is a
test and its one-line verdict is echoed in the terminal summary; run this file
directly to print the verdicts without pytest.
"""

import math
import sys
import tempfile

import numpy as np
import pytest

from tamedexp import (
    CubicBenchmark,
    IncrementGrid,
    LevelSpec,
    LinearPart,
    SchemeKind,
    SdeProblem,
    Taming,
    estimate_level_difference,
    generate_batch,
    integrate,
    make_cubic_problem,
    make_linear_problem,
    phi_sq_norm,
    taming_factor,
    weak_error_mlmc,
    weak_error_mlmcl0,
    weak_error_mlmcsr,
    weak_error_trad,
)
from tamedexp.cli import run_moments
from tamedexp.config import ExperimentConfig

GBM, EXP = SchemeKind.GBM_TAMED, SchemeKind.EXP_TAMED
TAMED_EULER, EM = SchemeKind.TAMED_EULER, SchemeKind.EULER_MARUYAMA
SEED = 12345
SAMPLES = 10_000

REPORT = []
_CACHE = {}


def report(number, title, passed, detail):
    line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    REPORT.append(line)
    print(line)
    return passed, detail


def zero(x):
    return np.zeros_like(x)


def cubic(x):
    return x - x**3


def _d1_setup():
    # criterion 1 protocol: d=1, beta1=0.1, beta2=0, N = 8..1024, 1e4 samples per level
    problem = make_cubic_problem(CubicBenchmark(dim=1, beta1=0.1, beta2=0.0))
    spec = LevelSpec(n0=8, finest_level=7, samples_per_level=SAMPLES)
    return problem, spec


def criterion_1():
    problem, spec = _d1_setup()
    slopes = {}
    for kind in (GBM, EXP):
        curve = weak_error_mlmcsr(problem, kind, spec, SEED, cache=_CACHE)
        slopes[str(kind)] = curve.fitted_slope
    ok = all(0.75 <= s <= 1.25 for s in slopes.values())
    return report(1, "weak order 1, d=1, MLMCSR", ok,
                  ", ".join(f"{k} slope {v:.3f}" for k, v in slopes.items()) + " (need [0.75, 1.25])")


def _d4_slope(kind, beta2):
    problem = make_cubic_problem(CubicBenchmark(dim=4, beta1=0.1, beta2=beta2))
    # dt <= 0.02: N = 64..4096
    spec = LevelSpec(n0=64, finest_level=6, samples_per_level=SAMPLES)
    return weak_error_mlmcsr(problem, kind, spec, SEED).fitted_slope


def criterion_2():
    slopes = {str(k): _d4_slope(k, 0.0) for k in (GBM, EXP)}
    ok = all(0.7 <= s <= 1.3 for s in slopes.values())
    return report(2, "weak order 1, d=4, dt <= 0.02", ok,
                  ", ".join(f"{k} slope {v:.3f}" for k, v in slopes.items()) + " (need [0.7, 1.3])")


def criterion_3():
    slope = _d4_slope(GBM, 0.1)
    return report(3, "nonlinear noise order 1, d=4, beta2=0.1", 0.7 <= slope <= 1.3,
                  f"GbmTamed slope {slope:.3f} (need [0.7, 1.3])")


def criterion_4():
    a, b, x0 = -4.0, 0.1, 0.5
    problem = make_linear_problem([[a]], [[[b]]], x0=[x0])
    grid = generate_batch(SEED, 0, 0, 1000, 1, 1, 1.0)
    y = integrate(problem, GBM, grid).terminal
    exact = x0 * np.exp(a - b * b / 2 + b * grid.values[:, 0, 0])
    worst = float(np.abs(phi_sq_norm(y) - exact**2).max())
    return report(4, "pathwise exactness, linear GBM, N=1", worst <= 1e-12,
                  f"max |phi(Y) - phi(X)| = {worst:.2e} over 1000 paths (need <= 1e-12)")


def _random_problem(rng, d, with_a, with_b):
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    a = q @ np.diag(rng.uniform(-3, 0.5, d)) @ q.T if with_a else np.zeros((d, d))
    b = q @ np.diag(rng.uniform(-0.4, 0.4, d)) @ q.T if with_b else np.zeros((d, d))
    c = rng.uniform(0.1, 0.5)
    return SdeProblem(LinearPart(a, (b,)), cubic, (lambda x: c * np.sin(x),), rng.uniform(-1, 1, d))


def criterion_5():
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(100):
        d = int(rng.integers(1, 5))
        n = int(rng.choice([4, 8, 16, 32]))
        grid = IncrementGrid(1.0 / n, rng.standard_normal((1, n)) * np.sqrt(1.0 / n))
        p_b0 = _random_problem(rng, d, True, False)
        p_a0 = _random_problem(rng, d, False, True)
        diffs = [
            integrate(p_b0, GBM, grid).terminal - integrate(p_b0, EXP, grid).terminal,
            integrate(p_a0, EXP, grid).terminal - integrate(p_a0, TAMED_EULER, grid).terminal,
            integrate(p_a0, TAMED_EULER, grid, Taming.NONE).terminal - integrate(p_a0, EM, grid).terminal,
        ]
        worst = max([worst] + [float(np.abs(x).max()) for x in diffs])
    return report(5, "degeneration chain", worst <= 1e-12,
                  f"max pathwise difference {worst:.2e} over 100 draws (need <= 1e-12)")


def criterion_6():
    problem = make_cubic_problem(CubicBenchmark(dim=4))
    # coarsest level at dt = 0.2 (N = 5) coupled with N = 10
    stats = {str(k): estimate_level_difference(problem, k, k, 10, 2, SAMPLES, SEED, 6) for k in (GBM, EXP)}
    ratio = stats["ExpTamed"].variance / stats["GbmTamed"].variance
    flagged = stats["ExpTamed"].unreliable and not stats["GbmTamed"].unreliable
    ok = ratio >= 10 or flagged
    return report(6, "stability contrast, d=4, dt=0.2", ok,
                  f"variance GbmTamed {stats['GbmTamed'].variance:.3e}, ExpTamed {stats['ExpTamed'].variance:.3e}, "
                  f"ratio {ratio:.2f} (need >= 10); unreliable GbmTamed={stats['GbmTamed'].unreliable}, "
                  f"ExpTamed={stats['ExpTamed'].unreliable}")


def criterion_7():
    problem = SdeProblem(LinearPart([[0.0]], ([[0.0]],)), cubic, (zero,), [3.0], horizon=5.0)
    grid = IncrementGrid(0.5, np.zeros((1, 10)))
    em = integrate(problem, EM, grid).max_norm
    te = integrate(problem, TAMED_EULER, grid).max_norm
    ok = em > 1e10 and te < 10
    return report(7, "divergence control, x0=3, dt=0.5", ok,
                  f"EulerMaruyama max norm {em:.3g} (need > 1e10), TamedEuler max norm {te:.3g} (need < 10)")


def criterion_8():
    cfg = ExperimentConfig(
        problem=CubicBenchmark(dim=1),
        schemes=(GBM, EXP, TAMED_EULER),
        levels=LevelSpec(n0=16, finest_level=6, samples_per_level=SAMPLES),
        master_seed=SEED,
    )
    with tempfile.TemporaryDirectory() as out:
        _, rows = run_moments(cfg, out_dir=out)
    parts, ok = [], True
    for kind in cfg.schemes:
        p4 = np.array([r[3] for r in rows if r[0] == kind.value])
        disc = max(r[4] for r in rows if r[0] == kind.value)
        ratio = p4.max() / p4.min()
        good = bool(np.all(np.isfinite(p4)) and ratio <= 2 and disc == 0)
        ok &= good
        parts.append(f"{kind.value} p4 max/min {ratio:.2f} discard {disc:g}{'' if good else ' [fails]'}")
    return report(8, "bounded moments, dt = 2^-4..2^-10", ok, ", ".join(parts) + " (need ratio <= 2, discard 0)")


def criterion_9():
    rng = np.random.default_rng(SEED)
    n = 100_000
    y = rng.standard_normal((n, 4)) * 10.0 ** rng.uniform(-3, 4, (n, 1))
    dt = 1.0 - rng.uniform(0, 1, n)  # (0, 1]
    f = cubic(y)
    alpha = taming_factor(f, dt)
    tamed_norm = np.linalg.norm(alpha[:, None] * f, axis=1)
    bad = int(np.count_nonzero((tamed_norm * dt > 1) | (alpha <= 0) | (alpha > 1)))
    return report(9, "taming contract", bad == 0, f"{bad} violations in {n} draws (need 0)")


def _criterion_1_curves():
    problem, spec = _d1_setup()
    curves = [
        weak_error_trad(problem, GBM, EXP, spec, SEED, cache=_CACHE),
        weak_error_mlmcl0(problem, GBM, EXP, spec, SEED, cache=_CACHE),
        weak_error_mlmc(problem, GBM, EXP, spec, SEED, cache=_CACHE),
        weak_error_mlmcsr(problem, GBM, spec, SEED, cache=_CACHE),
    ]
    return curves


def criterion_10():
    curves = _criterion_1_curves()
    worst, where = 0.0, ""
    for i, a in enumerate(curves):
        for b in curves[i + 1:]:
            z = np.abs(a.estimate - b.estimate) / np.hypot(a.std_error, b.std_error)
            k = int(np.argmax(z))
            if z[k] > worst:
                worst, where = float(z[k]), f"{a.estimator} vs {b.estimator} at N={a.n_steps[k]}"
    return report(10, "estimator agreement", worst <= 3,
                  f"max pairwise |diff| / combined SE = {worst:.2f} ({where}; need <= 3)")


def criterion_11():
    steps = {c.estimator: c.path_steps for c in _criterion_1_curves()}
    ok = steps["Trad"] > steps["MLMC"] >= steps["MLMCL0"]
    return report(11, "cost ordering", ok,
                  f"path-steps Trad {steps['Trad']:,} > MLMC {steps['MLMC']:,} >= MLMCL0 {steps['MLMCL0']:,}")


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5, criterion_6,
            criterion_7, criterion_8, criterion_9, criterion_10, criterion_11]


@pytest.mark.parametrize("criterion", CRITERIA, ids=[f"criterion_{i + 1}" for i in range(len(CRITERIA))])
def test_acceptance(criterion):
    passed, detail = criterion()
    assert passed, detail


if __name__ == "__main__":
    results = [c()[0] for c in CRITERIA]
    print(f"{sum(results)}/{len(results)} criteria passed")
    sys.exit(0 if all(results) else 1)
