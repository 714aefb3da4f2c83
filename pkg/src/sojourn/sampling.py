"""Seeded sampling from a ``RhoSequence``.

Two mechanisms are provided.  ``sample_inverse_cdf`` is the fast path;
``sample_sequential`` walks the stay/leave chain step by step and serves as
an independent check on it.  Randomness comes from numpy's ``SeedSequence``
keyed by ``(seed, *stream)`` so parallel trials get disjoint, reproducible
streams.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import RhoSequence, cdf


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """Generator for the stream ``(seed, *stream)``; independent across keys."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, stream)])))


@dataclass(frozen=True)
class SampleBatch:
    values: np.ndarray
    seed: int
    shift: int = 0
    source_params: Optional[object] = None

    def __len__(self):
        return int(self.values.size)

    def to_text(self) -> str:
        return "\n".join(str(int(v)) for v in self.values) + "\n"

    @classmethod
    def from_text(cls, text: str, seed: int = 0) -> "SampleBatch":
        vals = np.array([int(t) for t in text.split()], dtype=np.int64)
        return cls(vals, seed)


def _rng(seed, stream):
    return rng_for(seed, *stream)


def sample_inverse_cdf(
    rho: RhoSequence, n: int, seed: int, *, stream: tuple = (), shift: int = 0, source_params=None
) -> SampleBatch:
    if n < 1:
        raise ValueError("n must be >= 1")
    F = cdf(rho)
    u = _rng(seed, stream).random(n)
    # F(k) is the first k with F(k) > u; side="right" skips zero-mass points.
    k = np.searchsorted(F, u, side="right") + 1
    k = np.minimum(k, rho.T)
    return SampleBatch(k.astype(np.int64) + shift, seed, shift, source_params)


def sample_sequential(
    rho: RhoSequence, n: int, seed: int, *, stream: tuple = (), shift: int = 0, source_params=None
) -> SampleBatch:
    """Draw by running the chain: at step ``k`` stay w.p. ``rho(k)``, else stop.

    All draws advance together, one level per iteration.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = _rng(seed, stream)
    out = np.zeros(n, dtype=np.int64)
    alive = np.arange(n)
    for k in range(1, rho.T + 1):
        if alive.size == 0:
            break
        stay = rng.random(alive.size) < rho.rho[k - 1]
        out[alive[~stay]] = k
        alive = alive[stay]
    return SampleBatch(out + shift, seed, shift, source_params)
