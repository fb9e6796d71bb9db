"""Seeded Brownian increments and coarse-level coupling.

Every sample path owns a Philox stream keyed by ``(master_seed, level)`` with
the sample index in the high word of the counter.  A path is therefore fixed
by its :class:`SeedSpec` alone, whatever the batch or worker layout.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .exceptions import InvalidInputError

__all__ = ["IncrementGrid", "SeedSpec", "generate_increments", "generate_batch", "coarsen"]

_U64 = (1 << 64) - 1


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    level: int = 0
    sample_index: int = 0

    def __post_init__(self):
        for name in ("master_seed", "level", "sample_index"):
            v = getattr(self, name)
            if int(v) != v or not 0 <= v <= _U64:
                raise InvalidInputError(f"{name} must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class IncrementGrid:
    """Brownian increments ``values[..., i, n] = W^i(t_{n+1}) - W^i(t_n)``.

    ``values`` has shape ``(m, N)`` for one path or ``(n_paths, m, N)`` for a batch.
    """

    dt: float
    values: np.ndarray

    @property
    def m(self):
        return self.values.shape[-2]

    @property
    def n_steps(self):
        return self.values.shape[-1]

    @property
    def batched(self):
        return self.values.ndim == 3


@lru_cache(maxsize=256)
def _stream_key(master_seed, level):
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(level),))
    return ss.generate_state(2, np.uint64)


def _generator(master_seed, level, sample_index):
    counter = np.array([0, 0, 0, sample_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=_stream_key(master_seed, level), counter=counter))


def generate_increments(seed, m, n_steps, dt):
    """I.i.d. ``Normal(0, dt)`` increments for one path, fully determined by `seed`."""
    if n_steps < 1 or not dt > 0:
        raise InvalidInputError("need n_steps >= 1 and dt > 0")
    gen = _generator(seed.master_seed, seed.level, seed.sample_index)
    return IncrementGrid(dt, gen.standard_normal((m, n_steps)) * np.sqrt(dt))


def generate_batch(master_seed, level, start, stop, m, n_steps, dt):
    """Stack the grids of samples ``start..stop-1``; row k equals
    ``generate_increments(SeedSpec(master_seed, level, start + k), ...)``."""
    if n_steps < 1 or not dt > 0:
        raise InvalidInputError("need n_steps >= 1 and dt > 0")
    out = np.empty((stop - start, m, n_steps))
    for k, idx in enumerate(range(start, stop)):
        out[k] = _generator(master_seed, level, idx).standard_normal((m, n_steps))
    out *= np.sqrt(dt)
    return IncrementGrid(dt, out)


def _pairwise_halve(v):
    return v[..., 0::2] + v[..., 1::2]


def coarsen(fine, factor):
    """Sum blocks of `factor` consecutive increments.

    Powers of two are reduced by repeated pairwise halving, so
    ``coarsen(coarsen(g, 2), 2)`` and ``coarsen(g, 4)`` agree bit for bit;
    other factors are summed left to right.
    """
    factor = int(factor)
    if factor < 2 or fine.n_steps % factor:
        raise InvalidInputError(
            f"factor {factor} must be >= 2 and divide n_steps={fine.n_steps}"
        )
    v = fine.values
    if factor & (factor - 1) == 0:
        while v.shape[-1] > fine.n_steps // factor:
            v = _pairwise_halve(v)
    else:
        blocks = v.reshape(v.shape[:-1] + (fine.n_steps // factor, factor))
        v = blocks[..., 0].copy()
        for j in range(1, factor):
            v += blocks[..., j]
    return IncrementGrid(fine.dt * factor, v)
