"""Product-form discrete sojourn-time distributions.

A distribution on ``{1, ..., T}`` is described by its continuation
probabilities ``rho(k)``, the chance of staying one more step after ``k``
steps already spent, with ``rho(T) = 0``.  The PMF is

    f(k) = (1 - rho(k)) * prod_{t<k} rho(t)

and every PMF on a finite support has exactly one such representation.
Arrays are 0-based internally: ``rho[0]`` is ``rho(1)``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateTail, InvalidDistribution

PMF_SUM_TOL = 1e-12

# Above this support length survival products are accumulated as sums of logs.
LOG_SPACE_THRESHOLD = 64


def _frozen(arr) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class RhoSequence:
    """Continuation probabilities ``rho(1..T)`` with ``rho(T) = 0``."""

    rho: np.ndarray

    def __post_init__(self):
        rho = _frozen(np.atleast_1d(self.rho))
        if rho.ndim != 1 or rho.size < 1:
            raise InvalidDistribution("rho must be a non-empty vector")
        if rho[-1] != 0.0:
            raise InvalidDistribution(f"rho(T) must be exactly 0, got {rho[-1]!r}")
        interior = rho[:-1]
        bad = np.flatnonzero(~((interior > 0.0) & (interior <= 1.0)))
        if bad.size:
            k = int(bad[0]) + 1
            raise InvalidDistribution(f"rho({k}) = {interior[bad[0]]!r} is outside (0, 1]")
        object.__setattr__(self, "rho", rho)

    @property
    def T(self) -> int:
        return int(self.rho.size)

    @classmethod
    def from_rule(cls, rule: Callable[[int], float], T: int) -> "RhoSequence":
        """Truncate an infinite rule ``k -> rho(k)`` at ``T`` by forcing ``rho(T) = 0``."""
        vals = [float(rule(k)) for k in range(1, T)]
        return cls(np.array(vals + [0.0]))

    def __len__(self):
        return self.T


@dataclass(frozen=True)
class SojournPmf:
    """PMF ``f(1..T)`` on the support ``{shift+1, ..., shift+T}``.

    Trailing zero mass is trimmed so ``T`` is always the true maximum.
    """

    probs: np.ndarray
    shift: int = 0

    def __post_init__(self):
        p = np.array(np.atleast_1d(self.probs), dtype=float)
        if p.ndim != 1:
            raise InvalidDistribution("probs must be a vector")
        if np.any(~np.isfinite(p)) or np.any(p < 0.0) or np.any(p > 1.0):
            raise InvalidDistribution("probabilities must lie in [0, 1]")
        nz = np.flatnonzero(p > 0.0)
        if nz.size == 0:
            raise InvalidDistribution("PMF has no mass")
        p = p[: nz[-1] + 1]
        total = math.fsum(p)
        if abs(total - 1.0) > PMF_SUM_TOL:
            raise InvalidDistribution(f"probabilities sum to {total!r}, not 1")
        shift = int(self.shift)
        if shift < 0:
            raise InvalidDistribution("shift must be non-negative")
        object.__setattr__(self, "probs", _frozen(p))
        object.__setattr__(self, "shift", shift)

    @property
    def T(self) -> int:
        return int(self.probs.size)

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.shift + 1, self.shift + self.T + 1)

    def cdf(self) -> np.ndarray:
        F = np.minimum(np.cumsum(self.probs), 1.0)
        F[-1] = 1.0
        return F

    def prob(self, values) -> np.ndarray:
        """PMF evaluated at absolute (shifted) values; zero off-support."""
        v = np.asarray(values, dtype=int) - self.shift
        out = np.zeros(v.shape, dtype=float)
        ok = (v >= 1) & (v <= self.T)
        out[ok] = self.probs[v[ok] - 1]
        return out

    def quantile(self, levels) -> np.ndarray:
        """Smallest support point ``x`` with ``F(x) >= level``."""
        idx = np.searchsorted(self.cdf(), np.asarray(levels, dtype=float), side="left")
        return np.minimum(idx, self.T - 1) + 1 + self.shift

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "f", "F"])
        for k, f, F in zip(self.support, self.probs, self.cdf()):
            w.writerow([int(k), repr(float(f)), repr(float(F))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SojournPmf":
        rows = list(csv.DictReader(io.StringIO(text)))
        ks = [int(r["k"]) for r in rows]
        shift = ks[0] - 1
        if ks != list(range(shift + 1, shift + 1 + len(ks))):
            raise InvalidDistribution("k column must be consecutive")
        return cls(np.array([float(r["f"]) for r in rows]), shift=shift)


class Verdict(str, Enum):
    ALL_MOMENTS_EXIST = "AllMomentsExist"
    INDETERMINATE = "Indeterminate"


@dataclass(frozen=True)
class TailClass:
    limsup_rho: float
    verdict: Verdict


@dataclass(frozen=True)
class MomentReport:
    mean: float
    variance: float
    raw_moments: np.ndarray = field(repr=False)
    factorial_moments: np.ndarray = field(repr=False)

    def raw(self, n: int) -> float:
        return float(self.raw_moments[n - 1])

    def factorial(self, n: int) -> float:
        return float(self.factorial_moments[n - 1])


def survival(rho: RhoSequence) -> np.ndarray:
    """``S(k) = prod_{t<=k} rho(t) = P(X > k)`` for ``k = 1..T``."""
    r = rho.rho
    if r.size > LOG_SPACE_THRESHOLD:
        with np.errstate(divide="ignore"):
            return np.exp(np.cumsum(np.log(r)))
    return np.cumprod(r)


def pmf_from_rho(rho: RhoSequence) -> SojournPmf:
    S = survival(rho)
    before = np.concatenate(([1.0], S[:-1]))
    return SojournPmf((1.0 - rho.rho) * before)


def rho_from_pmf(pmf: SojournPmf) -> RhoSequence:
    """Invert :func:`pmf_from_rho`; ``rho(k) = tail(k+1) / tail(k)``.

    The tail sums ``sum_{t>=k} f(t)`` are accumulated from the right, which
    keeps small trailing probabilities exact instead of subtracting from 1.
    """
    f = pmf.probs
    tail = np.cumsum(f[::-1])[::-1]
    if np.any(tail[:-1] <= 0.0):
        k = int(np.flatnonzero(tail[:-1] <= 0.0)[0]) + 1
        raise DegenerateTail(f"tail mass vanished at k = {k}")
    rho = np.empty_like(f)
    rho[:-1] = np.minimum(tail[1:] / tail[:-1], 1.0)
    rho[-1] = 0.0
    return RhoSequence(rho)


def cdf(rho: RhoSequence) -> np.ndarray:
    F = 1.0 - survival(rho)
    F[-1] = 1.0
    return F


def moments(rho: RhoSequence, max_order: int = 2) -> MomentReport:
    """Raw moments from survival sums, factorial moments by direct summation."""
    if max_order < 1:
        raise ValueError("max_order must be >= 1")
    order = max(max_order, 2)
    T = rho.T
    S = survival(rho)[:-1]
    k = np.arange(1, T, dtype=float)
    raw = np.array(
        [math.fsum(((k + 1.0) ** m - k**m) * S) + 1.0 for m in range(1, order + 1)]
    )
    mean = raw[0]
    var = mean + 2.0 * math.fsum(k * S) - mean * mean
    f = pmf_from_rho(rho).probs  # trailing underflowed mass is trimmed
    x = np.arange(1, f.size + 1, dtype=float)
    fact = []
    falling = np.ones_like(x)
    for m in range(1, order + 1):
        falling = falling * (x - (m - 1))
        fact.append(math.fsum(falling * f))
    return MomentReport(
        mean=float(mean),
        variance=float(max(var, 0.0)),
        raw_moments=_frozen(raw[:max_order]),
        factorial_moments=_frozen(fact[:max_order]),
    )


def mgf_eval(rho: RhoSequence, t: float) -> float:
    T = rho.T
    if t * T > math.log(np.finfo(float).max):
        raise OverflowError(f"exp({t} * {T}) is not representable")
    S = survival(rho)[:-1]
    k = np.arange(1, T, dtype=float)
    return math.fsum((np.exp(t * (k + 1)) - np.exp(t * k)) * S) + math.exp(t)


def pgf_eval(rho: RhoSequence, z: float) -> float:
    if z > 0:
        return mgf_eval(rho, math.log(z))
    f = pmf_from_rho(rho).probs
    k = np.arange(1, rho.T + 1)
    return math.fsum(float(z) ** k * f)


def classify_tail(
    rho_rule: Callable[[int], float],
    probe_depth: int = 10**12,
    max_points: int = 4097,
) -> TailClass:
    """Estimate ``limsup rho(k)`` on the window ``[probe_depth/2, probe_depth]``.

    Large windows are subsampled at ``max_points`` integers including both
    endpoints.  Only ``limsup < 1`` gives a verdict; a limit of 1 is left
    undecided because moments may or may not exist there.
    """
    if probe_depth < 1:
        raise ValueError("probe_depth must be >= 1")
    lo = max(1, probe_depth // 2)
    if probe_depth - lo + 1 <= max_points:
        ks = range(lo, probe_depth + 1)
    else:
        ks = np.unique(np.linspace(lo, probe_depth, max_points).round().astype(np.int64))
    est = max(float(rho_rule(int(k))) for k in ks)
    verdict = Verdict.ALL_MOMENTS_EXIST if est < 1.0 - 1e-9 else Verdict.INDETERMINATE
    return TailClass(limsup_rho=est, verdict=verdict)


def shift_pmf(pmf: SojournPmf, t0: int) -> SojournPmf:
    """Relocate the support to ``{t0+1, ..., t0+T}``; ``t0`` is absolute."""
    if t0 < 0:
        raise ValueError("shift must be non-negative")
    return SojournPmf(pmf.probs, shift=t0)


def geometric_rho(p: float, T: int) -> RhoSequence:
    """Constant continuation probability ``p`` truncated at ``T``."""
    return RhoSequence(np.concatenate((np.full(T - 1, float(p)), [0.0])))


def as_rho(values: Sequence[float] | np.ndarray | RhoSequence) -> RhoSequence:
    return values if isinstance(values, RhoSequence) else RhoSequence(np.asarray(values, float))
