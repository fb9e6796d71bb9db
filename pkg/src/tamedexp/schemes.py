r"""Tamed exponential integrators and their degenerate relatives.

All steppers accept a single state ``y`` of shape ``(d,)`` with increments of
shape ``(m,)``, or a batch of shape ``(n, d)`` with increments ``(n, m)``.

GbmTamed
    :math:`Y_{n+1} = \Phi_n\big(Y_n + (\tilde F(Y_n) - \sum_i B_i g_i(Y_n))\Delta t
    + \sum_i g_i(Y_n)\Delta W^i_n\big)`
ExpTamed
    :math:`Y_{n+1} = e^{A\Delta t}\big(Y_n + \tilde F(Y_n)\Delta t
    + \sum_i \sigma_i(Y_n)\Delta W^i_n\big)` with :math:`\sigma_i(y) = B_i y + g_i(y)`
TamedEuler
    :math:`Y_{n+1} = Y_n + A Y_n \Delta t + \tilde F(Y_n)\Delta t + \sum_i \sigma_i(Y_n)\Delta W^i_n`
EulerMaruyama
    as TamedEuler without taming.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidInputError
from .paths import coarsen
from .problems import Taming, _tame
from .propagator import apply_propagator, deterministic_factor, mat_exp

__all__ = [
    "SchemeKind",
    "TrajectoryResult",
    "step_gbm_tamed",
    "step_exp_tamed",
    "step_tamed_euler",
    "step_euler_maruyama",
    "integrate",
    "integrate_pair",
]


class SchemeKind(enum.Enum):
    GBM_TAMED = "GbmTamed"
    EXP_TAMED = "ExpTamed"
    TAMED_EULER = "TamedEuler"
    EULER_MARUYAMA = "EulerMaruyama"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class TrajectoryResult:
    """Terminal state, running max of ``|Y_n|`` and a finiteness flag.

    Fields are per path when the grid is batched; an overflowed path has
    ``max_norm = inf``.
    """

    terminal: np.ndarray
    max_norm: np.ndarray
    finite: np.ndarray


def _batch(y, dws):
    y = np.asarray(y, dtype=float)
    dws = np.asarray(dws, dtype=float)
    single = y.ndim == 1
    return np.atleast_2d(y), dws.reshape(len(np.atleast_2d(y)), -1), single


def _noise(g_vals, dws):
    # sum_i g_i * dW_i over the driver axis
    out = 0.0
    for i, gv in enumerate(g_vals):
        out = out + gv * dws[:, i, None]
    return out


def _gbm(problem, y, dt, dws, det_factor, taming):
    lp = problem.linear
    g_vals = [g(y) for g in problem.diffusion_g]
    corr = 0.0
    for b, gv in zip(lp.bs, g_vals):
        corr = corr + gv @ b.T
    z = y + (_tame(problem.drift_f(y), dt, taming) - corr) * dt + _noise(g_vals, dws)
    return apply_propagator(lp, z, dws, dt, det_factor)


def _sigmas(problem, y):
    return [y @ b.T + g(y) for b, g in zip(problem.linear.bs, problem.diffusion_g)]


def _exp(problem, y, dt, dws, exp_a, taming):
    z = y + _tame(problem.drift_f(y), dt, taming) * dt + _noise(_sigmas(problem, y), dws)
    return z @ exp_a.T


def _euler(problem, y, dt, dws, taming):
    drift = y @ problem.linear.a.T + _tame(problem.drift_f(y), dt, taming)
    return y + drift * dt + _noise(_sigmas(problem, y), dws)


def step_gbm_tamed(problem, y, dt, dws, det_factor, taming=Taming.RECIPROCAL_NORM):
    """One tamed GBM step; `det_factor` is ``deterministic_factor(problem.linear, dt)``."""
    y2, d2, single = _batch(y, dws)
    out = _gbm(problem, y2, dt, d2, det_factor, Taming(taming))
    return out[0] if single else out


def step_exp_tamed(problem, y, dt, dws, exp_a_dt, taming=Taming.RECIPROCAL_NORM):
    """One exponential tamed step; `exp_a_dt` is ``mat_exp(A * dt)``."""
    y2, d2, single = _batch(y, dws)
    out = _exp(problem, y2, dt, d2, exp_a_dt, Taming(taming))
    return out[0] if single else out


def step_tamed_euler(problem, y, dt, dws, taming=Taming.RECIPROCAL_NORM):
    y2, d2, single = _batch(y, dws)
    out = _euler(problem, y2, dt, d2, Taming(taming))
    return out[0] if single else out


def step_euler_maruyama(problem, y, dt, dws):
    y2, d2, single = _batch(y, dws)
    out = _euler(problem, y2, dt, d2, Taming.NONE)
    return out[0] if single else out


def _stepper(problem, kind, dt, taming):
    kind = SchemeKind(kind)
    taming = Taming(taming)
    if kind is SchemeKind.GBM_TAMED:
        det = deterministic_factor(problem.linear, dt)
        return lambda y, dw: _gbm(problem, y, dt, dw, det, taming)
    if kind is SchemeKind.EXP_TAMED:
        exp_a = mat_exp(problem.linear.a * dt)
        return lambda y, dw: _exp(problem, y, dt, dw, exp_a, taming)
    if kind is SchemeKind.TAMED_EULER:
        return lambda y, dw: _euler(problem, y, dt, dw, taming)
    return lambda y, dw: _euler(problem, y, dt, dw, Taming.NONE)


def integrate(problem, kind, grid, taming=Taming.RECIPROCAL_NORM):
    """Advance ``problem.x0`` over every increment of `grid`.

    Overflow does not raise: affected paths come back with ``finite=False``.
    """
    if abs(grid.dt * grid.n_steps - problem.horizon) > 1e-12 * max(1.0, problem.horizon):
        raise InvalidInputError(
            f"grid covers {grid.dt * grid.n_steps}, horizon is {problem.horizon}"
        )
    if grid.m != problem.m:
        raise InvalidInputError(f"grid has {grid.m} drivers, problem has {problem.m}")
    values = grid.values if grid.batched else grid.values[None]
    n = values.shape[0]
    step = _stepper(problem, kind, grid.dt, taming)

    y = np.broadcast_to(problem.x0, (n, problem.dim)).copy()
    max_norm = np.linalg.norm(y, axis=1)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for k in range(grid.n_steps):
            y = step(y, values[:, :, k])
            np.fmax(max_norm, np.linalg.norm(y, axis=1), out=max_norm)
    finite = np.isfinite(y).all(axis=1) & np.isfinite(max_norm)
    max_norm[~finite] = np.inf
    if grid.batched:
        return TrajectoryResult(y, max_norm, finite)
    return TrajectoryResult(y[0], max_norm[0], bool(finite[0]))


def integrate_pair(problem, kind, fine_grid, factor, taming=Taming.RECIPROCAL_NORM, coarse_kind=None):
    """Integrate on `fine_grid` and on its coarsening by `factor` (same Brownian path)."""
    coarse_grid = coarsen(fine_grid, factor)
    fine = integrate(problem, kind, fine_grid, taming)
    coarse = integrate(problem, coarse_kind or kind, coarse_grid, taming)
    return fine, coarse

