r"""Multilevel Monte Carlo estimates of the weak error.

Level :math:`\ell` uses :math:`N_\ell = N_0 2^\ell` steps.  With a reference
scheme (superscript only) and a test scheme (sub- and superscript) the weak
error at target level :math:`L` telescopes as

.. math::
   E\phi(Y^{N_R}) - E\phi(Y^{N_L}_{N_L})
     = \big[E\phi(Y^{N_0}) - E\phi(Y^{N_0}_{N_0})\big]
     + \sum_{\ell=1}^{R} E\big[\phi(Y^{N_\ell}) - \phi(Y^{N_{\ell-1}})\big]
     - \sum_{\ell=1}^{L} E\big[\phi(Y^{N_\ell}_{N_\ell}) - \phi(Y^{N_{\ell-1}}_{N_{\ell-1}})\big].

The four estimators differ in how the pieces are sampled:

``Trad``
    Reference telescope once, plus a fresh, independent test telescope for
    every target level.
``MLMC``
    One ladder per scheme shared by all targets; the two coarsest
    expectations are sampled independently.
``MLMCL0``
    As ``MLMC`` but the coarsest bracket is one coupled difference (both
    schemes driven by the same Brownian path).
``MLMCSR``
    Self reference: the error at ``L`` is the tail ``sum_{l > L}`` of one ladder.

Every estimate draws its paths from streams keyed by a tag that encodes its
role, scheme and level, so estimators that need the same piece get the same
numbers and pieces with different roles are independent.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .exceptions import EstimationFailedError, FitUndefinedError, InvalidInputError
from .paths import generate_batch
from .problems import Taming, phi_sq_norm
from .schemes import SchemeKind, integrate, integrate_pair

__all__ = [
    "LevelSpec",
    "LevelStats",
    "WeakErrorCurve",
    "estimate_single_level",
    "sample_single_level",
    "estimate_level_difference",
    "weak_error_trad",
    "weak_error_mlmcl0",
    "weak_error_mlmc",
    "weak_error_mlmcsr",
    "ESTIMATORS",
    "fit_rate",
]

CHUNK = 1024
UNRELIABLE_DISCARD_FRACTION = 0.01
FIT_MIN_ERROR = 1e-12

_SCHEME_CODE = {k: i + 1 for i, k in enumerate(SchemeKind)}
# A scheme's ladder is keyed by the scheme alone, so the reference ladder, the
# test ladder and the self-referenced ladder of one scheme are the same samples.
_REF_SINGLE, _TEST_SINGLE, _CROSS, _LADDER, _TRAD_TEST = range(1, 6)
_LABELS = {
    _REF_SINGLE: "ref_single",
    _TEST_SINGLE: "test_single",
    _CROSS: "cross",
    _LADDER: "ladder",
    _TRAD_TEST: "trad_test",
}


def level_tag(purpose, kind_a, kind_b=None, level=0, extra=0):
    """Pack an estimate's role into the ``level`` field of its seed streams."""
    a = _SCHEME_CODE[SchemeKind(kind_a)]
    b = _SCHEME_CODE[SchemeKind(kind_b)] if kind_b is not None else 0
    return ((((purpose * 8 + a) * 8 + b) * 256 + extra) * 256) + level


@dataclass(frozen=True)
class LevelSpec:
    """Level ladder ``N_l = n0 * 2**l`` for ``l = 0..finest_level``.

    Weak errors are reported for ``L = 0..target_level`` (default
    ``finest_level - 1``).  ``samples_per_level`` is one count for every
    level or a list of ``finest_level + 1`` counts.
    """

    n0: int = 8
    finest_level: int = 7
    target_level: Optional[int] = None
    samples_per_level: Union[int, Sequence[int]] = 10_000

    def __post_init__(self):
        if self.n0 < 1 or self.finest_level < 1:
            raise InvalidInputError("need n0 >= 1 and finest_level >= 1")
        target = self.finest_level - 1 if self.target_level is None else self.target_level
        if not 0 <= target <= self.finest_level:
            raise InvalidInputError("target_level must lie in [0, finest_level]")
        object.__setattr__(self, "target_level", int(target))
        s = self.samples_per_level
        s = (int(s),) * (self.finest_level + 1) if np.ndim(s) == 0 else tuple(int(v) for v in s)
        if len(s) != self.finest_level + 1 or min(s) < 2:
            raise InvalidInputError(
                f"samples_per_level needs {self.finest_level + 1} counts, each >= 2"
            )
        object.__setattr__(self, "samples_per_level", s)

    def n_steps(self, level):
        return self.n0 * 2**level

    def samples(self, level):
        return self.samples_per_level[level]


@dataclass(frozen=True)
class LevelStats:
    """Sample mean and unbiased variance over the finite samples of one estimate."""

    mean: float
    variance: float
    n_samples: int
    n_discarded: int = 0
    path_steps: int = 0

    @property
    def std_error(self):
        return math.sqrt(self.variance / self.n_samples)

    @property
    def discard_fraction(self):
        return self.n_discarded / (self.n_samples + self.n_discarded)

    @property
    def unreliable(self):
        return self.discard_fraction > UNRELIABLE_DISCARD_FRACTION


@dataclass
class WeakErrorCurve:
    """Weak error estimates per target level, sorted by decreasing step size."""

    estimator: str
    scheme: str
    reference: str
    levels: np.ndarray
    n_steps: np.ndarray
    dt: np.ndarray
    estimate: np.ndarray
    std_error: np.ndarray
    n_discarded: np.ndarray
    unreliable: bool = False
    path_steps: int = 0
    fitted_slope: float = float("nan")
    fitted_intercept: float = float("nan")
    fit_mask: np.ndarray = field(default=None, repr=False)
    pieces: list = field(default_factory=list, repr=False)

    @property
    def error(self):
        return np.abs(self.estimate)

    @property
    def points(self):
        return list(zip(self.dt.tolist(), self.error.tolist(), self.std_error.tolist()))


def _sample(fn, n_samples, workers):
    starts = range(0, n_samples, CHUNK)
    spans = [(s, min(s + CHUNK, n_samples)) for s in starts]
    if workers and workers > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda sp: fn(*sp), spans))
    else:
        parts = [fn(*sp) for sp in spans]
    return np.concatenate(parts)


def _stats(values, path_steps, what):
    ok = np.isfinite(values)
    n_ok = int(ok.sum())
    n_bad = values.size - n_ok
    if n_ok < 2:
        raise EstimationFailedError(f"{what}: fewer than two finite samples", n_bad)
    v = values[ok]
    with np.errstate(over="ignore", invalid="ignore"):
        # huge but finite samples may overflow the moments; inf is the honest answer
        return LevelStats(float(v.mean()), float(v.var(ddof=1)), n_ok, n_bad, int(path_steps))


def sample_single_level(problem, kind, n_steps, n_samples, master_seed, level_tag,
                        taming=Taming.RECIPROCAL_NORM, observable=phi_sq_norm, workers=1):
    """``observable(Y_N)`` for samples ``0..n_samples-1``; NaN marks a non-finite path."""
    dt = problem.horizon / n_steps

    def chunk(start, stop):
        grid = generate_batch(master_seed, level_tag, start, stop, problem.m, n_steps, dt)
        res = integrate(problem, kind, grid, taming)
        with np.errstate(over="ignore", invalid="ignore"):
            vals = np.asarray(observable(res.terminal), dtype=float)
        vals[~res.finite] = np.nan
        return vals

    return _sample(chunk, n_samples, workers)


def estimate_single_level(problem, kind, n_steps, n_samples, master_seed, level_tag,
                          taming=Taming.RECIPROCAL_NORM, observable=phi_sq_norm, workers=1):
    """Plain Monte Carlo estimate of ``E[phi(Y_N)]`` with `n_steps` steps."""
    if n_samples < 2:
        raise InvalidInputError("n_samples must be >= 2")
    values = sample_single_level(problem, kind, n_steps, n_samples, master_seed, level_tag,
                                 taming, observable, workers)
    return _stats(values, n_samples * n_steps, f"{kind} N={n_steps}")


def estimate_level_difference(problem, kind_fine, kind_coarse, fine_n, factor, n_samples,
                              master_seed, level_tag, taming=Taming.RECIPROCAL_NORM,
                              observable=phi_sq_norm, workers=1):
    """Coupled estimate of ``E[phi(Y_fine) - phi(Y_coarse)]``.

    ``factor=2`` couples ``fine_n`` steps with ``fine_n // 2`` steps of the
    same path; ``factor=1`` runs both schemes on the identical grid.
    """
    if factor not in (1, 2) or fine_n % factor:
        raise InvalidInputError("factor must be 1 or 2 and divide fine_n")
    if n_samples < 2:
        raise InvalidInputError("n_samples must be >= 2")
    dt = problem.horizon / fine_n

    def chunk(start, stop):
        grid = generate_batch(master_seed, level_tag, start, stop, problem.m, fine_n, dt)
        if factor == 1:
            f = integrate(problem, kind_fine, grid, taming)
            c = integrate(problem, kind_coarse, grid, taming)
        else:
            f, c = integrate_pair(problem, kind_fine, grid, factor, taming, coarse_kind=kind_coarse)
        with np.errstate(over="ignore", invalid="ignore"):
            vals = np.asarray(observable(f.terminal) - observable(c.terminal), dtype=float)
        vals[~(f.finite & c.finite)] = np.nan
        return vals

    values = _sample(chunk, n_samples, workers)
    steps = n_samples * (fine_n + fine_n // factor)
    return _stats(values, steps, f"{kind_fine}-{kind_coarse} N={fine_n}")


class _Pieces:
    """Builds (and optionally caches) the level estimates an estimator needs.

    A shared ``cache`` dict is only valid for one problem, seed, taming and
    observable.
    """

    def __init__(self, problem, spec, seed, taming, observable, workers, cache):
        self.problem = problem
        self.spec = spec
        self.seed = seed
        self.kw = dict(taming=taming, observable=observable, workers=workers)
        self.cache = {} if cache is None else cache
        self.path_steps = 0
        self.unreliable = False
        self.record = []
        self._seen = set()

    def _use(self, key, label, level, make):
        if key not in self.cache:
            self.cache[key] = make()
        stats = self.cache[key]
        if key not in self._seen:
            # a piece used twice (test scheme == reference) is integrated once
            self._seen.add(key)
            self.path_steps += stats.path_steps
        self.unreliable |= stats.unreliable
        self.record.append((label, level, stats))
        return stats

    @staticmethod
    def _label(purpose, extra):
        # Trad rebuilds its test telescope per target level; name the target
        return _LABELS[purpose] + (f"[L={extra - 1}]" if extra else "")

    def single(self, purpose, kind, extra=0):
        kind = SchemeKind(kind)
        tag = level_tag(purpose, kind, None, 0, extra)
        n, s = self.spec.n_steps(0), self.spec.samples(0)
        return self._use(("single", tag, n, s), self._label(purpose, extra), 0, lambda: estimate_single_level(
            self.problem, kind, n, s, self.seed, tag, **self.kw))

    def diff(self, purpose, kind, level, extra=0, label=None):
        kind = SchemeKind(kind)
        tag = level_tag(purpose, kind, None, level, extra)
        n, s = self.spec.n_steps(level), self.spec.samples(level)
        return self._use(("diff", tag, n, s), label or self._label(purpose, extra), level, lambda: estimate_level_difference(
            self.problem, kind, kind, n, 2, s, self.seed, tag, **self.kw))

    def cross(self, kind_ref, kind_test):
        kind_ref, kind_test = SchemeKind(kind_ref), SchemeKind(kind_test)
        tag = level_tag(_CROSS, kind_ref, kind_test)
        n, s = self.spec.n_steps(0), self.spec.samples(0)
        return self._use(("cross", tag, n, s), _LABELS[_CROSS], 0, lambda: estimate_level_difference(
            self.problem, kind_ref, kind_test, n, 1, s, self.seed, tag, **self.kw))


def _combine(stats):
    mean = sum(sign * s.mean for sign, s in stats)
    se = math.sqrt(sum(s.variance / s.n_samples for _, s in stats))
    return mean, se, sum(s.n_discarded for _, s in stats)


def _curve(name, kind_test, kind_ref, spec, problem, rows, pieces):
    levels = np.arange(len(rows))
    n_steps = np.array([spec.n_steps(int(L)) for L in levels])
    est, se, disc = (np.array(col) for col in zip(*rows))
    curve = WeakErrorCurve(
        estimator=name,
        scheme=str(SchemeKind(kind_test)),
        reference=str(SchemeKind(kind_ref)),
        levels=levels,
        n_steps=n_steps,
        dt=problem.horizon / n_steps,
        estimate=est.astype(float),
        std_error=se.astype(float),
        n_discarded=disc.astype(int),
        unreliable=pieces.unreliable,
        path_steps=pieces.path_steps,
        pieces=pieces.record,
    )
    err = curve.error
    mask = (err > 3 * curve.std_error) & (err > FIT_MIN_ERROR)
    curve.fit_mask = mask
    if mask.sum() >= 2:
        curve.fitted_slope, curve.fitted_intercept = fit_rate(
            list(zip(curve.dt[mask], err[mask]))
        )
    return curve


def _targets(spec):
    return range(spec.target_level + 1)


def weak_error_trad(problem, kind_test, kind_ref, spec, seed, *, taming=Taming.RECIPROCAL_NORM,
                    observable=phi_sq_norm, workers=1, cache=None):
    """Two independent telescopes; the test one is rebuilt for every target level."""
    p = _Pieces(problem, spec, seed, taming, observable, workers, cache)
    ref = [(1, p.single(_REF_SINGLE, kind_ref))]
    ref += [(1, p.diff(_LADDER, kind_ref, l, label="ref_ladder")) for l in range(1, spec.finest_level + 1)]
    rows = []
    for L in _targets(spec):
        test = [(-1, p.single(_TRAD_TEST, kind_test, extra=L + 1))]
        test += [(-1, p.diff(_TRAD_TEST, kind_test, l, extra=L + 1)) for l in range(1, L + 1)]
        rows.append(_combine(ref + test))
    return _curve("Trad", kind_test, kind_ref, spec, problem, rows, p)


def _ladder_rows(p, spec, kind_test, kind_ref, coarsest):
    ref_ladder = [(1, p.diff(_LADDER, kind_ref, l, label="ref_ladder"))
                  for l in range(1, spec.finest_level + 1)]
    test_ladder = [(-1, p.diff(_LADDER, kind_test, l, label="test_ladder"))
                   for l in range(1, spec.target_level + 1)]
    return [_combine(coarsest + ref_ladder + test_ladder[:L]) for L in _targets(spec)]


def weak_error_mlmc(problem, kind_test, kind_ref, spec, seed, *, taming=Taming.RECIPROCAL_NORM,
                    observable=phi_sq_norm, workers=1, cache=None):
    """Shared ladders with independently sampled coarsest expectations."""
    p = _Pieces(problem, spec, seed, taming, observable, workers, cache)
    coarsest = [(1, p.single(_REF_SINGLE, kind_ref)), (-1, p.single(_TEST_SINGLE, kind_test))]
    return _curve("MLMC", kind_test, kind_ref, spec, problem,
                  _ladder_rows(p, spec, kind_test, kind_ref, coarsest), p)


def weak_error_mlmcl0(problem, kind_test, kind_ref, spec, seed, *, taming=Taming.RECIPROCAL_NORM,
                      observable=phi_sq_norm, workers=1, cache=None):
    """Shared ladders with a coupled cross-scheme difference on the coarsest level."""
    p = _Pieces(problem, spec, seed, taming, observable, workers, cache)
    coarsest = [(1, p.cross(kind_ref, kind_test))]
    return _curve("MLMCL0", kind_test, kind_ref, spec, problem,
                  _ladder_rows(p, spec, kind_test, kind_ref, coarsest), p)


def weak_error_mlmcsr(problem, kind, spec, seed, *, taming=Taming.RECIPROCAL_NORM,
                      observable=phi_sq_norm, workers=1, cache=None):
    """Self-referenced error: tail sums of one ladder of `kind`."""
    p = _Pieces(problem, spec, seed, taming, observable, workers, cache)
    ladder = [None] + [p.diff(_LADDER, kind, l) for l in range(1, spec.finest_level + 1)]
    # build tails from the finest level down so each L reuses L+1's partial sum
    tails = {spec.finest_level: (0.0, 0.0, 0)}
    for L in range(spec.finest_level - 1, -1, -1):
        m, var, disc = tails[L + 1]
        s = ladder[L + 1]
        tails[L] = (m + s.mean, var + s.variance / s.n_samples, disc + s.n_discarded)
    rows = [(tails[L][0], math.sqrt(tails[L][1]), tails[L][2]) for L in _targets(spec)]
    return _curve("MLMCSR", kind, kind, spec, problem, rows, p)


ESTIMATORS = {
    "Trad": weak_error_trad,
    "MLMCL0": weak_error_mlmcl0,
    "MLMC": weak_error_mlmc,
    "MLMCSR": lambda problem, kind_test, kind_ref, spec, seed, **kw: weak_error_mlmcsr(
        problem, kind_test, spec, seed, **kw),
}


def fit_rate(points):
    """Least-squares line through ``(log dt, log error)``.

    Returns
    -------
    (slope, intercept)
    """
    pts = [(float(d), float(e)) for d, e in points if e > 0 and d > 0 and np.isfinite(e)]
    if len({d for d, _ in pts}) < 2:
        raise FitUndefinedError("need at least two points with distinct dt and positive error")
    x = np.log([d for d, _ in pts])
    y = np.log([e for _, e in pts])
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)
