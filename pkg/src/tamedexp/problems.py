r"""Semi-linear SDE problems, drift taming and the cubic benchmark.

A problem is

.. math::
   dX = (AX + F(X))\,dt + \sum_{i=1}^m (B_i X + g_i(X))\,dW^i,
   \qquad X_0 = x_0,\quad t \in [0, T].

`F` and every `g_i` act on arrays of shape ``(..., d)`` so that a whole batch
of paths can be advanced at once.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .exceptions import InvalidInputError
from .propagator import LinearPart

__all__ = [
    "SdeProblem",
    "Taming",
    "CubicBenchmark",
    "tame_drift",
    "taming_factor",
    "make_cubic_problem",
    "make_linear_problem",
    "phi_sq_norm",
]


@dataclass(frozen=True)
class SdeProblem:
    """Problem data ``(A, {B_i}, F, {g_i}, x0, T)``."""

    linear: LinearPart
    drift_f: Callable[[np.ndarray], np.ndarray]
    diffusion_g: tuple
    x0: np.ndarray
    horizon: float = 1.0

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "diffusion_g", tuple(self.diffusion_g))
        if x0.shape != (self.linear.dim,):
            raise InvalidInputError(
                f"x0 has length {x0.size}, expected {self.linear.dim}"
            )
        if len(self.diffusion_g) != self.linear.m:
            raise InvalidInputError(
                f"{len(self.diffusion_g)} diffusion functions for {self.linear.m} drivers"
            )
        if not self.horizon > 0:
            raise InvalidInputError("horizon must be positive")
        # spot check on x0 and a batch around it
        probe = np.stack([x0, 2 * x0 + 1.0])
        for name, fn in [("drift_f", self.drift_f)] + [
            (f"g_{i + 1}", g) for i, g in enumerate(self.diffusion_g)
        ]:
            out = np.asarray(fn(probe))
            if out.shape != probe.shape or not np.all(np.isfinite(out)):
                raise InvalidInputError(f"{name} must map (n, d) arrays to finite (n, d) arrays")

    @property
    def dim(self):
        return self.linear.dim

    @property
    def m(self):
        return self.linear.m


class Taming(enum.Enum):
    RECIPROCAL_NORM = "reciprocal-norm"
    NONE = "none"


def taming_factor(f_val, dt, kind=Taming.RECIPROCAL_NORM):
    """``alpha = 1 / (1 + dt * |F|)`` per row of `f_val` (1 for ``Taming.NONE``)."""
    f_val = np.asarray(f_val, dtype=float)
    if kind is Taming.NONE:
        return np.ones(f_val.shape[:-1])
    return _alpha(dt * np.linalg.norm(f_val, axis=-1))


_CAP = 1.0 - 8 * np.finfo(float).eps


def _alpha(x):
    # x / (1 + x) rounds up to 1 once x exceeds ~1/eps, so cap alpha * x just
    # below 1; the cap only binds where 1/(1+x) and _CAP/x agree to a few ulps
    with np.errstate(divide="ignore"):
        return np.minimum(1.0 / (1.0 + x), _CAP / x)


def _tame(f_val, dt, kind):
    # unchecked variant for the integrator hot loop
    if kind is Taming.NONE:
        return f_val
    return f_val * _alpha(dt * np.sqrt(np.einsum("...i,...i->...", f_val, f_val)))[..., None]


def tame_drift(f_val, dt, kind=Taming.RECIPROCAL_NORM):
    """Tamed drift ``alpha(dt, y) * F(y)`` given ``f_val = F(y)``.

    For the reciprocal-norm form ``|result| * dt <= 1`` and ``0 < alpha <= 1``.
    """
    f_val = np.asarray(f_val, dtype=float)
    if not dt > 0:
        raise InvalidInputError("dt must be positive")
    if not np.all(np.isfinite(f_val)):
        raise InvalidInputError("F(y) must be finite")
    if f_val.ndim == 0:
        f_val = f_val.reshape(1)
    return _tame(f_val, dt, Taming(kind))


@dataclass(frozen=True)
class CubicBenchmark:
    """Cubic drift benchmark ``dX = (AX + X - X^3) dt + (b1 X + b2 X / (1 + X^2)) dW``.

    ``laplacian_scaling`` selects ``A = 0.5 / d**2 * tridiag(1, -2, 1)``
    (``"literal"``) or ``0.5 * d**2 * tridiag(1, -2, 1)`` (``"fd"``) for ``d >= 2``;
    ``d = 1`` always uses ``A = -4``.  ``nonlinear_drift=False`` drops the
    ``X - X^3`` term and ``x0`` overrides the initial profile.
    """

    dim: int = 1
    beta1: float = 0.1
    beta2: float = 0.0
    laplacian_scaling: str = "literal"
    nonlinear_drift: bool = True
    x0: Optional[Sequence[float]] = field(default=None)

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise InvalidInputError("dim must be a positive integer")
        if self.laplacian_scaling not in ("literal", "fd"):
            raise InvalidInputError("laplacian_scaling must be 'literal' or 'fd'")


def _cubic(x):
    return x - x**3


def _zero(x):
    return np.zeros_like(x)


def benchmark_matrix(dim, laplacian_scaling="literal"):
    if dim == 1:
        return np.array([[-4.0]])
    scale = 0.5 / dim**2 if laplacian_scaling == "literal" else 0.5 * dim**2
    tri = -2.0 * np.eye(dim) + np.eye(dim, k=1) + np.eye(dim, k=-1)
    return scale * tri


def benchmark_x0(dim):
    if dim == 1:
        return np.array([0.5])
    y = np.arange(1, dim + 1) / (dim + 1)
    return 0.5 * np.exp(-10.0 * (y - 0.5) ** 2)


def make_cubic_problem(cfg):
    """Build the cubic benchmark SDE on ``[0, 1]`` with one Brownian driver."""
    d = int(cfg.dim)
    a = benchmark_matrix(d, cfg.laplacian_scaling)
    b1 = cfg.beta1 * np.eye(d)
    beta2 = float(cfg.beta2)
    if beta2 == 0.0:
        g1 = _zero
    else:
        def g1(x):
            return beta2 * x / (1.0 + x**2)
    if cfg.x0 is None:
        x0 = benchmark_x0(d)
    else:
        x0 = np.broadcast_to(np.asarray(cfg.x0, dtype=float), (d,)).copy()
    return SdeProblem(
        linear=LinearPart(a, (b1,)),
        drift_f=_cubic if cfg.nonlinear_drift else _zero,
        diffusion_g=(g1,),
        x0=x0,
        horizon=1.0,
    )


def make_linear_problem(a, bs=(), x0=None, horizon=1.0):
    """Pure linear problem (``F = 0``, ``g_i = 0``) for exactness checks."""
    lp = LinearPart(a, tuple(bs))
    x0 = np.ones(lp.dim) if x0 is None else x0
    return SdeProblem(lp, _zero, (_zero,) * lp.m, x0, horizon)


def phi_sq_norm(y):
    """Squared Euclidean norm over the last axis."""
    y = np.asarray(y, dtype=float)
    return np.einsum("...i,...i->...", y, y)
