r"""Matrix exponentials and the stochastic solution operator of the linear part.

For commuting matrices :math:`A, B_1, \dots, B_m` the linear SDE
:math:`dX = AX\,dt + \sum_i B_i X\,dW^i` has the exact solution operator

.. math::
   \Phi(t, s) = \exp\Big(\big(A - \tfrac12 \sum_i B_i^2\big)(t-s)
                + \sum_i B_i (W^i_t - W^i_s)\Big).

The deterministic factor :math:`\exp((A - \frac12\sum B_i^2)\Delta t)` depends
only on the step size, so it is computed once and passed around.  When every
:math:`B_i = c_i I` the random factor reduces to the scalar
:math:`\exp(\sum_i c_i \Delta W^i)`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import InvalidInputError, NonCommutingError

__all__ = [
    "LinearPart",
    "mat_exp",
    "check_commutators",
    "deterministic_factor",
    "propagator_sample",
    "apply_propagator",
]

# Degree-13 Pade numerator coefficients b_0..b_13 (Higham 2005).
_PADE13 = np.array(
    [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ]
)
_THETA13 = 5.371920351148152

_SCALAR_TOL = 1e-14


def _as_matrix(m, name="matrix"):
    m = np.asarray(m, dtype=float)
    if m.ndim == 0:
        m = m.reshape(1, 1)
    if m.ndim < 2 or m.shape[-1] != m.shape[-2] or m.shape[-1] < 1:
        raise InvalidInputError(f"{name} must be square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return m


def mat_exp(m):
    """Matrix exponential by scaling and squaring with a degree-13 Pade approximant.

    Parameters
    ----------
    m : array_like, shape (..., d, d)
        Real square matrix or a stack of them.

    Returns
    -------
    ndarray
        ``exp(m)`` with the same shape as `m`.
    """
    a = _as_matrix(m)
    d = a.shape[-1]
    eye = np.eye(d)
    norm1 = np.abs(a).sum(axis=-2).max(axis=-1)
    with np.errstate(divide="ignore"):
        s = np.where(norm1 > _THETA13, np.ceil(np.log2(norm1 / _THETA13)), 0.0)
    s = s.astype(int)
    a = a / np.ldexp(1.0, s)[..., None, None]

    b = _PADE13
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a2 @ a4
    u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
             + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * eye)
    v = a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * eye
    # (v - u)^-1 (v + u) written as I + 2 (v - u)^-1 u, exact when u = 0
    r = eye + 2.0 * np.linalg.solve(v - u, u)

    smax = int(np.max(s)) if s.size else 0
    for k in range(smax):
        if r.ndim == 2:
            r = r @ r
        else:
            todo = (s > k)[..., None, None]
            r = np.where(todo, r @ r, r)
    return r


@dataclass(frozen=True)
class LinearPart:
    """Drift matrix ``a`` and noise matrices ``bs`` of a semi-linear SDE.

    Construction checks that all matrices commute (pass ``check=False`` to
    skip) and detects whether every noise matrix is a multiple of the
    identity, in which case :attr:`scalars` holds the multipliers.
    """

    a: np.ndarray
    bs: tuple = ()
    check: bool = field(default=True, repr=False, compare=False)
    all_scalar: bool = field(init=False)
    scalars: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        a = _as_matrix(self.a, "A")
        if a.ndim != 2:
            raise InvalidInputError("A must be a single matrix")
        bs = tuple(_as_matrix(b, f"B_{i + 1}") for i, b in enumerate(self.bs))
        for i, b in enumerate(bs):
            if b.shape != a.shape:
                raise InvalidInputError(
                    f"B_{i + 1} has shape {b.shape}, expected {a.shape}"
                )
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "bs", bs)

        scalars = []
        for b in bs:
            c = float(np.mean(np.diag(b)))
            off = b - np.diag(np.diag(b))
            spread = np.ptp(np.diag(b))
            if np.max(np.abs(off), initial=0.0) <= _SCALAR_TOL and spread <= _SCALAR_TOL * (1 + abs(c)):
                scalars.append(c)
            else:
                scalars = None
                break
        object.__setattr__(self, "all_scalar", scalars is not None)
        object.__setattr__(self, "scalars", np.array(scalars if scalars else [], dtype=float))

        if self.check:
            violations = check_commutators(self)
            if violations:
                raise NonCommutingError(violations)

    @property
    def dim(self):
        return self.a.shape[0]

    @property
    def m(self):
        return len(self.bs)

    def generator(self):
        """Return ``A - 0.5 * sum(B_i @ B_i)``."""
        g = self.a.copy()
        for b in self.bs:
            g -= 0.5 * (b @ b)
        return g


def check_commutators(lp, tol=None):
    """List the commutators of ``lp`` whose Frobenius norm exceeds `tol`.

    Checks ``[A, B_i]`` for every i and ``[B_i, B_j]`` for i < j.  With
    ``tol=None`` each pair uses the scale-aware tolerance
    ``1e-10 * (1 + |X|_F * |Y|_F)``.

    Returns
    -------
    list of ((str, str), float)
        ``((name_x, name_y), norm)`` for each offending pair; empty when the
        problem is admissible.
    """
    if tol is not None and tol <= 0:
        raise InvalidInputError("tol must be positive")
    named = [("A", lp.a)] + [(f"B_{i + 1}", b) for i, b in enumerate(lp.bs)]
    out = []
    for i in range(len(named)):
        for j in range(max(i + 1, 1), len(named)):
            (nx, x), (ny, y) = named[i], named[j]
            norm = float(np.linalg.norm(x @ y - y @ x))
            limit = tol if tol is not None else 1e-10 * (1 + np.linalg.norm(x) * np.linalg.norm(y))
            if norm > limit:
                out.append(((nx, ny), norm))
    return out


def deterministic_factor(lp, dt):
    """``exp((A - 0.5 * sum B_i^2) * dt)``; reuse it for every step of size `dt`."""
    if dt < 0:
        raise InvalidInputError("dt must be non-negative")
    return mat_exp(lp.generator() * dt)


def _check_dws(lp, dws):
    dws = np.asarray(dws, dtype=float)
    if dws.shape[-1:] != (lp.m,):
        raise InvalidInputError(f"expected {lp.m} Brownian increments, got shape {dws.shape}")
    return dws


def propagator_sample(lp, dt, dws, det_factor, fast=True):
    """One realisation of the solution operator over a step of length `dt`.

    Parameters
    ----------
    lp : LinearPart
    dt : float
    dws : array_like, shape (m,) or (n, m)
        Brownian increments of each driver; a leading axis gives a batch.
    det_factor : ndarray
        ``deterministic_factor(lp, dt)``.
    fast : bool
        Use the scalar shortcut when every ``B_i`` is a multiple of identity.
        ``fast=False`` always exponentiates the full argument.

    Returns
    -------
    ndarray, shape (d, d) or (n, d, d)
    """
    dws = _check_dws(lp, dws)
    if fast and lp.all_scalar:
        scale = np.exp(dws @ lp.scalars)
        return det_factor * np.asarray(scale)[..., None, None]
    arg = lp.generator() * dt + np.tensordot(dws, np.array(lp.bs).reshape(lp.m, lp.dim, lp.dim), axes=(-1, 0))
    return mat_exp(arg)


def apply_propagator(lp, z, dws, dt, det_factor):
    """Compute ``Phi @ z`` row-wise for a batch of states.

    `z` has shape (n, d) and `dws` shape (n, m); returns shape (n, d).  On the
    scalar-noise path Phi is never formed.
    """
    if lp.all_scalar:
        if lp.m == 0:
            return z @ det_factor.T
        return (z @ det_factor.T) * np.exp(dws @ lp.scalars)[:, None]
    phi = propagator_sample(lp, dt, dws, det_factor, fast=False)
    return np.einsum("nij,nj->ni", phi, z)
