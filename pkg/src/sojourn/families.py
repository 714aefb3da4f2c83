"""Linear and simple polynomial factor models for ``rho``.

Both families are written in the slope form with ``rho(T) = 0`` built in:

    linear:      rho(k) = a (k - T)
    polynomial:  rho(k) = a ((k - c)^n - (T - c)^n)

The intercept form ``b`` is ``-a T`` (linear) or ``-a (T - c)^n`` (polynomial).
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .core import RhoSequence
from .errors import EmptyInterval, OutOfBounds


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    lo_closed: bool = True
    hi_closed: bool = False

    def __contains__(self, x: float) -> bool:
        above = x >= self.lo if self.lo_closed else x > self.lo
        below = x <= self.hi if self.hi_closed else x < self.hi
        return bool(above and below)

    def grid(self, num: int) -> np.ndarray:
        """``num`` evenly spaced points inside the interval, open ends skipped."""
        pts = np.linspace(self.lo, self.hi, num + 2 - self.lo_closed - self.hi_closed)
        if not self.lo_closed:
            pts = pts[1:]
        if not self.hi_closed:
            pts = pts[:-1]
        return pts

    def quantile(self, q: float) -> float:
        return self.lo + q * (self.hi - self.lo)


@dataclass(frozen=True)
class LinearParams:
    a: float
    T: int
    shift: int = 0

    family = "linear"

    @property
    def b(self) -> float:
        return -self.a * self.T


@dataclass(frozen=True)
class PolyParams:
    a: float
    c: float
    n: int
    T: int
    shift: int = 0

    family = "poly"

    @property
    def b(self) -> float:
        return -self.a * (self.T - self.c) ** self.n


def linear_bounds(T: int) -> Interval:
    """Admissible slopes ``[1/(1-T), 0)``; ``a = 0`` is excluded."""
    if T < 2:
        raise ValueError("linear model needs T >= 2")
    return Interval(1.0 / (1.0 - T), 0.0, lo_closed=True, hi_closed=False)


def linear_b_bounds(T: int) -> Interval:
    if T < 2:
        raise ValueError("linear model needs T >= 2")
    return Interval(0.0, T / (T - 1.0), lo_closed=False, hi_closed=True)


def linear_rho(p: LinearParams) -> RhoSequence:
    if p.T == 1:
        return RhoSequence(np.zeros(1))
    if p.a not in linear_bounds(p.T):
        raise OutOfBounds(f"a = {p.a!r} outside {linear_bounds(p.T)}")
    k = np.arange(1, p.T + 1, dtype=float)
    rho = np.minimum(p.a * (k - p.T), 1.0)
    rho[-1] = 0.0
    return RhoSequence(rho)


def _poly_g(n: int, c: float, T: int) -> np.ndarray:
    """``(k - c)^n - (T - c)^n`` for ``k = 1..T-1``."""
    k = np.arange(1, T, dtype=float)
    return (k - c) ** n - float(T - c) ** n


def poly_bounds(n: int, c: float, T: int) -> Interval:
    """Slope interval keeping every ``rho(k)``, ``k < T``, inside ``(0, 1]``.

    Each ``k`` contributes ``0 < a g(k) <= 1`` with ``g(k) = (k-c)^n - (T-c)^n``;
    the binding constraint is found by enumerating ``k``.
    """
    if n < 1:
        raise ValueError("degree n must be a positive integer")
    if T < 2:
        raise ValueError("polynomial model needs T >= 2")
    if c == T:
        raise EmptyInterval("c = T collapses the model to the linear family")
    if n % 2 == 0 and (T + 1) / 2 <= c < T:
        raise EmptyInterval(f"n even with c in [(T+1)/2, T) forces b = 0 (c = {c})")
    g = _poly_g(n, c, T)
    if np.all(g < 0):
        return Interval(float(np.max(1.0 / g)), 0.0, lo_closed=True, hi_closed=False)
    if np.all(g > 0):
        return Interval(0.0, float(np.min(1.0 / g)), lo_closed=False, hi_closed=True)
    raise EmptyInterval(f"no slope keeps rho in (0, 1] for n={n}, c={c}, T={T}")


def poly_rho(p: PolyParams) -> RhoSequence:
    if p.T == 1:
        return RhoSequence(np.zeros(1))
    g = _poly_g(p.n, p.c, p.T)
    rho = p.a * g
    if np.any(rho <= 0.0) or np.any(rho > 1.0 + 1e-15):
        k = int(np.flatnonzero((rho <= 0.0) | (rho > 1.0 + 1e-15))[0]) + 1
        raise OutOfBounds(f"rho({k}) = {rho[k - 1]!r} outside (0, 1]")
    return RhoSequence(np.concatenate((np.minimum(rho, 1.0), [0.0])))


def a_to_b(a: float, T: int, c: Optional[float] = None, n: Optional[int] = None) -> float:
    if c is None:
        return -a * T
    return -a * float(T - c) ** n


def b_to_a(b: float, T: int, c: Optional[float] = None, n: Optional[int] = None) -> float:
    if c is None:
        return -b / T
    return -b / float(T - c) ** n


def convert_ab(family: str, value: float, *, to: str, T: int, c=None, n=None) -> float:
    """Convert between slope ``a`` and intercept ``b`` for either family."""
    if family not in ("linear", "poly"):
        raise ValueError(f"unknown family {family!r}")
    if family == "poly" and (c is None or n is None):
        raise ValueError("poly conversion needs c and n")
    if family == "linear":
        c = n = None
    if to == "b":
        return a_to_b(value, T, c, n)
    if to == "a":
        return b_to_a(value, T, c, n)
    raise ValueError("to must be 'a' or 'b'")


def rho_for(p) -> RhoSequence:
    return linear_rho(p) if isinstance(p, LinearParams) else poly_rho(p)


def params_to_dict(p) -> dict:
    d = asdict(p)
    d["family"] = p.family
    if isinstance(p, LinearParams):
        d.setdefault("c", None)
        d.setdefault("n", None)
    return {k: d[k] for k in ("family", "a", "c", "n", "T", "shift")}


def params_from_dict(d: dict):
    family = d.get("family")
    shift = int(d.get("shift") or 0)
    if family == "linear":
        return LinearParams(a=float(d["a"]), T=int(d["T"]), shift=shift)
    if family == "poly":
        return PolyParams(a=float(d["a"]), c=float(d["c"]), n=int(d["n"]), T=int(d["T"]), shift=shift)
    raise ValueError(f"unknown family {family!r}")


def params_to_json(p) -> str:
    return json.dumps(params_to_dict(p))


def params_from_json(text: str):
    return params_from_dict(json.loads(text))


def poly_min_a(n: int, c: float, T: int) -> float:
    """Most negative admissible slope (``min(a)``) for the odd, ``c < T`` rows."""
    iv = poly_bounds(n, c, T)
    if iv.hi != 0.0:
        raise ValueError("min(a) is only defined for negative-slope rows")
    return iv.lo
