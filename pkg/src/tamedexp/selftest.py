"""Fast invariant checks run by ``tamedexp selftest``.

Each check returns ``(name, passed, detail)``.  All randomness is seeded, so
two runs print the same report.
"""

from __future__ import annotations

import contextlib

import numpy as np

from . import propagator
from .mlmc import LevelSpec, weak_error_mlmcl0, weak_error_mlmcsr
from .paths import IncrementGrid, SeedSpec, coarsen, generate_batch, generate_increments
from .problems import (
    CubicBenchmark,
    SdeProblem,
    Taming,
    make_cubic_problem,
    make_linear_problem,
    phi_sq_norm,
    taming_factor,
)
from .propagator import LinearPart, deterministic_factor, mat_exp, propagator_sample
from .schemes import SchemeKind, integrate

FAULTS = ("pade",)


def _taylor_exp(m, terms=50):
    out = np.eye(len(m))
    term = np.eye(len(m))
    for k in range(1, terms):
        term = term @ m / k
        out = out + term
    return out


def _rel(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300))


def check_mat_exp():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(20):
        m = rng.standard_normal((4, 4))
        m *= rng.uniform(0.05, 1.0) / np.linalg.norm(m, 2)
        worst = max(worst, _rel(mat_exp(m), _taylor_exp(m)))
    nil = mat_exp(np.array([[0.0, 1.0], [0.0, 0.0]]))
    worst = max(worst, _rel(nil, np.array([[1.0, 1.0], [0.0, 1.0]])))
    return "mat_exp vs Taylor oracle", worst <= 1e-12, f"max rel err {worst:.2e}"


def check_propagator():
    rng = np.random.default_rng(2)
    q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    a = q @ np.diag(rng.uniform(-2, 0.5, 3)) @ q.T
    b = q @ np.diag(rng.uniform(-0.5, 0.5, 3)) @ q.T
    lp = LinearPart(a, (b,))
    ident = propagator_sample(lp, 0.0, [0.0], deterministic_factor(lp, 0.0))
    err_id = float(np.abs(ident - np.eye(3)).max())
    dt1, dt2, w1, w2 = 0.3, 0.2, 0.4, -0.7
    p1 = propagator_sample(lp, dt1, [w1], deterministic_factor(lp, dt1))
    p2 = propagator_sample(lp, dt2, [w2], deterministic_factor(lp, dt2))
    p12 = propagator_sample(lp, dt1 + dt2, [w1 + w2], deterministic_factor(lp, dt1 + dt2))
    err_sg = float(np.abs(p2 @ p1 - p12).max())

    prob = make_cubic_problem(CubicBenchmark(dim=4))
    lp4 = prob.linear
    dws = rng.standard_normal((200, 1)) * 0.3
    det = deterministic_factor(lp4, 0.1)
    fast = propagator_sample(lp4, 0.1, dws, det)
    slow = propagator_sample(lp4, 0.1, dws, det, fast=False)
    err_fp = float(np.abs(fast - slow).max())
    ok = err_id <= 1e-14 and err_sg <= 1e-10 and err_fp <= 1e-10
    return "propagator identity/semigroup/fast path", ok, (
        f"identity {err_id:.1e}, semigroup {err_sg:.1e}, fast path {err_fp:.1e}")


def _random_problem(rng, d, with_b=True, with_a=True):
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    a = q @ np.diag(rng.uniform(-3, 0.5, d)) @ q.T if with_a else np.zeros((d, d))
    b = q @ np.diag(rng.uniform(-0.4, 0.4, d)) @ q.T if with_b else np.zeros((d, d))
    c = rng.uniform(0.1, 0.5)

    def g(x):
        return c * np.sin(x)

    def f(x):
        return x - x**3

    return SdeProblem(LinearPart(a, (b,)), f, (g,), rng.uniform(-1, 1, d), 1.0)


def check_degeneration():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(10):
        d = int(rng.integers(1, 4))
        n = 16
        grid = IncrementGrid(1.0 / n, rng.standard_normal((5, 1, n)) * np.sqrt(1.0 / n))
        p_b0 = _random_problem(rng, d, with_b=False)
        p_a0 = _random_problem(rng, d, with_b=True, with_a=False)
        pairs = [
            (integrate(p_b0, "GbmTamed", grid).terminal, integrate(p_b0, "ExpTamed", grid).terminal),
            (integrate(p_a0, "ExpTamed", grid).terminal, integrate(p_a0, "TamedEuler", grid).terminal),
            (integrate(p_a0, "TamedEuler", grid, Taming.NONE).terminal,
             integrate(p_a0, "EulerMaruyama", grid).terminal),
        ]
        worst = max([worst] + [float(np.abs(x - y).max()) for x, y in pairs])
    return "degeneration chain", worst <= 1e-12, f"max diff {worst:.1e}"


def check_coupling():
    g = generate_batch(7, 1, 0, 64, 2, 64, 1 / 64)
    same = np.array_equal(coarsen(coarsen(g, 2), 2).values, coarsen(g, 4).values)
    again = generate_increments(SeedSpec(7, 1, 5), 2, 64, 1 / 64)
    det = np.array_equal(again.values, g.values[5])
    total = float(np.abs(coarsen(g, 64).values[..., 0] - g.values.sum(axis=-1)).max())
    ok = bool(same and det and total <= 4 * np.finfo(float).eps * 64)
    return "increment coupling", ok, f"nested={same}, deterministic={det}, sum diff {total:.1e}"


def check_taming():
    rng = np.random.default_rng(4)
    y = rng.standard_normal((10_000, 3)) * 10.0 ** rng.uniform(-3, 3, (10_000, 1))
    dt = rng.uniform(1e-6, 1.0, 10_000)
    f = y - y**3
    alpha = taming_factor(f, dt)
    tamed = alpha[:, None] * f
    bad = int(np.sum((np.linalg.norm(tamed, axis=1) * dt > 1.0) | (alpha <= 0) | (alpha > 1)))
    return "taming bound", bad == 0, f"{bad} violations in {len(y)} draws"


def check_linear_exactness():
    prob = make_linear_problem([[-4.0]], [[[0.1]]], x0=[0.5])
    worst = 0.0
    for n in (1, 16):
        grid = generate_batch(11, 0, 0, 200, 1, n, 1.0 / n)
        y = integrate(prob, "GbmTamed", grid).terminal[:, 0]
        w = grid.values[:, 0, :].sum(axis=1)
        exact = 0.5 * np.exp((-4.0 - 0.5 * 0.01) + 0.1 * w)
        worst = max(worst, float(np.abs(phi_sq_norm(y[:, None]) - exact**2).max()))
    spec = LevelSpec(n0=2, finest_level=3, samples_per_level=64)
    sr = weak_error_mlmcsr(prob, SchemeKind.GBM_TAMED, spec, 5)
    l0 = weak_error_mlmcl0(prob, SchemeKind.GBM_TAMED, SchemeKind.GBM_TAMED, spec, 5)
    est = float(max(np.abs(sr.estimate).max(), np.abs(l0.estimate).max()))
    ok = worst <= 1e-12 and est <= 1e-12
    return "linear problem exactness", ok, f"path err {worst:.1e}, estimator err {est:.1e}"


CHECKS = (
    check_mat_exp,
    check_propagator,
    check_degeneration,
    check_coupling,
    check_taming,
    check_linear_exactness,
)


@contextlib.contextmanager
def inject_fault(fault):
    """Temporarily corrupt an internal table (used to prove the checks can fail)."""
    if fault is None:
        yield
        return
    if fault != "pade":
        raise ValueError(f"unknown fault {fault!r}; choose from {FAULTS}")
    saved = propagator._PADE13
    corrupted = saved.copy()
    corrupted[3] *= 1.0 + 1e-6
    propagator._PADE13 = corrupted
    try:
        yield
    finally:
        propagator._PADE13 = saved


def run_checks(fault=None):
    results = []
    with inject_fault(fault):
        for check in CHECKS:
            try:
                results.append(check())
            except Exception as exc:  # a crashing check is a failing check
                results.append((check.__name__, False, f"raised {type(exc).__name__}: {exc}"))
    return results
