"""Maximum likelihood for the linear and polynomial factor models.

Everything is parametrised by the slope ``a < 0``.  Log-likelihoods use the
log-law form ``(x - 1) log(-a)`` and therefore return ``-inf`` for ``a >= 0``
instead of silently accepting a positive slope when every observation is odd.

Samples are reduced to counts over ``{1, ..., T}`` after removing the shift,
so each likelihood evaluation costs ``O(T)`` regardless of sample size.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from .errors import NoFeasibleStart, OutOfBounds, SingularInformation, SupportViolation
from .families import LinearParams, PolyParams, linear_bounds, linear_rho, poly_bounds, poly_rho
from .core import pmf_from_rho

DEFAULT_T_MARGIN = 200


@dataclass
class FitResult:
    family: str
    a_hat: float
    T_hat: int
    shift_hat: int
    loglik: float
    converged: bool
    degenerate: bool = False
    solver_iterations: int = 0
    c_hat: Optional[float] = None
    n: Optional[int] = None
    at_boundary: bool = False
    grid_edge: bool = False
    searched_shifts: tuple = ()
    T_ranges: dict = field(default_factory=dict)
    grid: list = field(default_factory=list, repr=False)

    def params(self):
        """The fitted parameter bundle, or ``None`` for a degenerate fit."""
        if self.degenerate:
            return None
        if self.family == "linear":
            return LinearParams(self.a_hat, self.T_hat, self.shift_hat)
        return PolyParams(self.a_hat, self.c_hat, self.n, self.T_hat, self.shift_hat)

    def pmf(self):
        from .core import SojournPmf

        if self.degenerate:
            return SojournPmf(np.ones(1), shift=self.shift_hat)
        p = self.params()
        rho = linear_rho(p) if self.family == "linear" else poly_rho(p)
        return SojournPmf(pmf_from_rho(rho).probs, shift=self.shift_hat)

    def to_dict(self, include_grid: bool = False) -> dict:
        d = asdict(self)
        d["searched_shifts"] = list(self.searched_shifts)
        d["T_ranges"] = {str(k): list(v) for k, v in self.T_ranges.items()}
        if not include_grid:
            d.pop("grid")
        return d

    def to_json(self, include_grid: bool = False) -> str:
        return json.dumps(self.to_dict(include_grid), indent=2, allow_nan=True)

    def grid_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["shift", "T", "a", "c", "loglik"])
        for row in self.grid:
            w.writerow([row[0], row[1], repr(row[2]), "" if row[3] is None else repr(row[3]), repr(row[4])])
        return buf.getvalue()


@dataclass(frozen=True)
class FisherInfo:
    matrix: np.ndarray
    crlb: np.ndarray

    @property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.matrix)


# ---------------------------------------------------------------- sample prep


def counts_for(sample, T: int, shift: int = 0) -> np.ndarray:
    """Counts of shifted values over ``1..T``; raises on out-of-support data."""
    x = np.asarray(sample, dtype=np.int64).ravel() - int(shift)
    if x.size == 0:
        raise ValueError("empty sample")
    lo, hi = int(x.min()), int(x.max())
    if lo < 1 or hi > T:
        raise SupportViolation(
            f"shifted values span [{lo}, {hi}], outside support [1, {T}] (shift={shift})"
        )
    return np.bincount(x - 1, minlength=T).astype(float)


class _Suff:
    """Sufficient statistics of a sample for a given support."""

    __slots__ = ("cnt", "N", "excess", "nz", "k")

    def __init__(self, cnt: np.ndarray):
        self.cnt = cnt
        self.N = float(cnt.sum())
        self.k = np.arange(1, cnt.size + 1, dtype=float)
        # sum of (x_i - 1)
        self.excess = float(cnt @ (self.k - 1.0))
        self.nz = cnt > 0


def _masked_log_sum(cnt, nz, vals) -> float:
    with np.errstate(divide="ignore", invalid="ignore"):
        return float(cnt[nz] @ np.log(vals[nz]))


# ---------------------------------------------------------------- linear model


def _lin_loglik(a: float, T: int, st: _Suff) -> float:
    if a >= 0.0:
        return -math.inf
    w = T - st.k
    one_minus_rho = 1.0 + a * w
    if np.any(one_minus_rho[st.nz] < 0.0):
        return -math.inf
    head = np.concatenate(([0.0], np.cumsum(np.log(T - st.k[:-1]))))
    val = _masked_log_sum(st.cnt, st.nz, one_minus_rho) + st.excess * math.log(-a)
    return val + float(st.cnt @ head)


def _lin_score(a: float, T: int, st: _Suff) -> float:
    w = (T - st.k)[st.nz]
    return float(st.cnt[st.nz] @ (w / (1.0 + a * w))) + st.excess / a


def _lin_curv(a: float, T: int, st: _Suff) -> float:
    w = (T - st.k)[st.nz]
    return -float(st.cnt[st.nz] @ (w * w / (1.0 + a * w) ** 2)) - st.excess / (a * a)


def loglik_linear(a: float, T: int, sample, shift: int = 0) -> float:
    """Log-likelihood of the linear factor model; ``-inf`` when ``a >= 0``."""
    st = _Suff(counts_for(sample, T, shift))
    if T >= 2 and a < linear_bounds(T).lo:
        raise OutOfBounds(f"a = {a!r} below {linear_bounds(T).lo!r}")
    return _lin_loglik(a, T, st)


def score_linear(a: float, T: int, sample, shift: int = 0) -> float:
    return _lin_score(a, T, _Suff(counts_for(sample, T, shift)))


def hessian_linear(a: float, T: int, sample, shift: int = 0) -> float:
    return _lin_curv(a, T, _Suff(counts_for(sample, T, shift)))


def _degenerate(family: str, shift: int, n=None) -> FitResult:
    # All observations at the first support point: the likelihood is
    # maximised only in the limit a -> 0, i.e. a point mass at 1.
    return FitResult(family, 0.0, 1, shift, 0.0, True, degenerate=True, n=n)


def _mle_linear_counts(T: int, st: _Suff, shift: int) -> FitResult:
    if st.excess == 0.0:
        return _degenerate("linear", shift)
    lo = linear_bounds(T).lo
    eps = 1e-12 * abs(lo)
    calls = [0]

    def s(a):
        calls[0] += 1
        return _lin_score(a, T, st)

    left = lo + eps if st.cnt[0] > 0 else lo
    if s(left) <= 0.0:
        return FitResult("linear", lo, T, shift, _lin_loglik(lo, T, st), True,
                         solver_iterations=calls[0], at_boundary=True)
    right = -eps
    if s(right) >= 0.0:
        # No sign change: compare the two ends.
        cands = [(lo, _lin_loglik(lo, T, st)), (right, _lin_loglik(right, T, st))]
        a, ll = max(cands, key=lambda t: t[1])
        return FitResult("linear", a, T, shift, ll, True, solver_iterations=calls[0], at_boundary=True)
    a, info = brentq(s, left, right, xtol=1e-15, rtol=4 * np.finfo(float).eps, full_output=True)
    return FitResult("linear", float(a), T, shift, _lin_loglik(a, T, st), bool(info.converged),
                     solver_iterations=calls[0] + info.function_calls)


def mle_linear(sample, T: int, shift: int = 0) -> FitResult:
    """MLE of ``a`` for known ``T``.

    The log-likelihood is strictly concave in ``a``, so the maximiser is
    either the unique root of the score or the lower end ``1/(1-T)``.
    """
    cnt = counts_for(sample, T, shift)
    if T == 1:
        return _degenerate("linear", shift)
    return _mle_linear_counts(T, _Suff(cnt), shift)


def fisher_linear(a: float, T: int, N: int = 1) -> FisherInfo:
    if not a < 0.0:
        raise ValueError("Fisher information is singular at a = 0 and undefined for a > 0")
    f = pmf_from_rho(linear_rho(LinearParams(a, T))).probs
    k = np.arange(1, T + 1, dtype=float)
    w = T - k
    keep = f > 0
    per = (k - 1) / a**2 + w**2 / (1.0 + a * w) ** 2
    phi = N * float(f[keep] @ per[keep])
    return FisherInfo(np.array([[phi]]), np.array([1.0 / phi]))


# ------------------------------------------------------------ polynomial model


class _PolyGeom:
    """Per-(n, c, T) quantities shared by the polynomial likelihood pieces."""

    __slots__ = ("n", "c", "T", "g", "dg", "head", "dhead", "amin", "kstar")

    def __init__(self, n: int, c: float, T: int):
        if not c < T:
            raise OutOfBounds(f"c = {c!r} must be below T = {T}")
        k = np.arange(1, T + 1, dtype=float)
        D = float(T - c) ** n
        g = D - (k - c) ** n
        g[-1] = 0.0
        gi = g[:-1]
        if np.any(gi <= 0.0):
            raise OutOfBounds(f"(T-c)^n - (t-c)^n must be positive for t < T (n={n}, c={c}, T={T})")
        self.n, self.c, self.T = n, c, T
        self.g = g
        self.dg = n * (k - c) ** (n - 1) - n * float(T - c) ** (n - 1)
        self.dg[-1] = 0.0
        self.head = np.concatenate(([0.0], np.cumsum(np.log(gi))))
        self.dhead = np.concatenate(([0.0], np.cumsum(self.dg[:-1] / gi)))
        self.kstar = int(np.argmax(gi))
        self.amin = -1.0 / gi[self.kstar]


def _poly_loglik(a: float, geo: _PolyGeom, st: _Suff) -> float:
    if a >= 0.0:
        return -math.inf
    om = 1.0 + a * geo.g
    if np.any(om[st.nz] < 0.0):
        return -math.inf
    return (_masked_log_sum(st.cnt, st.nz, om) + st.excess * math.log(-a)
            + float(st.cnt @ geo.head))


def _poly_score_a(a: float, geo: _PolyGeom, st: _Suff) -> float:
    g = geo.g[st.nz]
    return float(st.cnt[st.nz] @ (g / (1.0 + a * g))) + st.excess / a


def _poly_score_c(a: float, geo: _PolyGeom, st: _Suff) -> float:
    nz = st.nz
    return float(st.cnt[nz] @ (a * geo.dg[nz] / (1.0 + a * geo.g[nz]))) + float(st.cnt @ geo.dhead)


def _check_a_poly(a, geo):
    if a < geo.amin * (1.0 + 1e-12):
        raise OutOfBounds(f"a = {a!r} below min(a) = {geo.amin!r}")


def loglik_poly(a: float, c: float, n: int, T: int, sample, shift: int = 0) -> float:
    """Log-likelihood of the polynomial factor model; ``-inf`` when ``a >= 0``."""
    st = _Suff(counts_for(sample, T, shift))
    geo = _PolyGeom(n, c, T)
    _check_a_poly(a, geo)
    return _poly_loglik(a, geo, st)


def score_poly(a: float, c: float, n: int, T: int, sample, shift: int = 0) -> tuple[float, float]:
    st = _Suff(counts_for(sample, T, shift))
    geo = _PolyGeom(n, c, T)
    return _poly_score_a(a, geo, st), _poly_score_c(a, geo, st)


def _profile_a(geo: _PolyGeom, st: _Suff) -> tuple[float, float, bool, int]:
    """Maximise over ``a`` for fixed ``c``: returns ``(a, loglik, at_boundary, calls)``.

    Concave in ``a``, so a bracketing root search on the score in the
    normalised slope ``u = a / min(a)`` in ``(0, 1]`` is exact.
    """
    amin = geo.amin
    calls = 0

    def s(u):
        nonlocal calls
        calls += 1
        return _poly_score_a(u * amin, geo, st)

    u_hi = 1.0 if st.cnt[geo.kstar] == 0 else 1.0 - 1e-15
    s_hi = s(u_hi)
    if s_hi <= 0.0:
        a = u_hi * amin
        return a, _poly_loglik(a, geo, st), True, calls
    u_lo = 1e-3
    while s(u_lo) >= 0.0:
        u_lo *= 1e-3
        if u_lo < 1e-300:
            a = u_lo * amin
            return a, _poly_loglik(a, geo, st), True, calls
    u, info = brentq(s, u_lo, u_hi, xtol=1e-16, rtol=4 * np.finfo(float).eps, full_output=True)
    calls += info.function_calls
    a = u * amin
    return a, _poly_loglik(a, geo, st), False, calls


def _profile(c: float, n: int, T: int, st: _Suff):
    geo = _PolyGeom(n, c, T)
    a, ll, bnd, calls = _profile_a(geo, st)
    grad = _poly_score_c(a, geo, st)
    if bnd:
        # a pinned at min(a), which moves with c.
        dgk = geo.dg[geo.kstar]
        gk = geo.g[geo.kstar]
        grad += _poly_score_a(a, geo, st) * dgk / (gk * gk)
    return a, ll, grad, bnd, calls


def _ascend_c(c0, n, T, st, c_lo, c_hi, max_iter=200, gtol=1e-8):
    """Projected gradient ascent on the profile log-likelihood in ``c``.

    Step lengths start from a Barzilai-Borwein estimate and are halved until
    the Armijo condition holds.
    """
    c = min(max(c0, c_lo), c_hi)
    a, ll, g, bnd, calls = _profile(c, n, T, st)
    alpha = 0.05 * (c_hi - c_lo) / max(abs(g), 1e-12)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if abs(g) < gtol:
            converged = True
            break
        step_ok = False
        for _ in range(60):
            c_new = min(max(c + alpha * g, c_lo), c_hi)
            if c_new == c:
                break
            a_new, ll_new, g_new, bnd_new, k = _profile(c_new, n, T, st)
            calls += k
            if ll_new >= ll + 1e-4 * g * (c_new - c):
                step_ok = True
                break
            alpha *= 0.5
        if not step_ok:
            # Pinned against a bound or no further ascent possible.
            converged = c in (c_lo, c_hi) or abs(alpha * g) < 1e-12 * max(1.0, abs(c))
            break
        dc, dgrad = c_new - c, g_new - g
        c, a, ll, g, bnd = c_new, a_new, ll_new, g_new, bnd_new
        if abs(dc) < 1e-12 * max(1.0, abs(c)):
            converged = True
            break
        if dc * dgrad < 0.0:
            alpha = -dc / dgrad
        else:
            alpha *= 2.0
    at_edge = bnd or c in (c_lo, c_hi)
    return dict(a=a, c=c, ll=ll, converged=converged, iters=it, calls=calls, boundary=at_edge)


def default_c_bounds(sample_min: int, T: int) -> tuple[float, float]:
    return float(sample_min - T), float(T) - 1e-6 * max(1.0, T)


def mle_poly(
    sample,
    n: int,
    T: int,
    shift: int = 0,
    *,
    c_bounds: Optional[tuple[float, float]] = None,
    starts: int = 5,
) -> FitResult:
    """MLE of ``(a, c)`` for known ``n`` and ``T`` with ``c < T``.

    ``a`` is maximised exactly for each ``c`` (the likelihood is concave in
    ``a``), and the resulting profile is climbed from ``starts`` evenly spaced
    values of ``c``.  The two ends of the ``c`` range are always evaluated.
    """
    cnt = counts_for(sample, T, shift)
    st = _Suff(cnt)
    if T == 1 or st.excess == 0.0:
        return _degenerate("poly", shift, n)
    xmin = int(np.flatnonzero(cnt)[0]) + 1
    c_lo, c_hi = c_bounds if c_bounds is not None else default_c_bounds(xmin, T)
    c_hi = min(c_hi, float(T) - 1e-9)
    start_hi = min(float(T - 1), c_hi)
    seeds = np.linspace(c_lo, start_hi, starts) if starts > 1 else np.array([0.5 * (c_lo + start_hi)])
    runs = []
    for c0 in list(seeds) + [c_lo, c_hi]:
        try:
            runs.append(_ascend_c(float(c0), n, T, st, c_lo, c_hi))
        except OutOfBounds:
            continue
    runs = [r for r in runs if np.isfinite(r["ll"])]
    if not runs:
        raise NoFeasibleStart(f"no feasible (a, c) start for n={n}, T={T}")
    best = max(runs, key=lambda r: r["ll"])
    return FitResult(
        "poly", float(best["a"]), T, shift, float(best["ll"]), bool(best["converged"]),
        solver_iterations=sum(r["iters"] for r in runs), c_hat=float(best["c"]), n=n,
        at_boundary=bool(best["boundary"]),
    )


def _poly_single_scores(a: float, c: float, n: int, T: int):
    geo = _PolyGeom(n, c, T)
    f = pmf_from_rho(poly_rho(PolyParams(a, c, n, T))).probs
    k = np.arange(1, T + 1, dtype=float)
    keep = f > 0
    om = 1.0 + a * geo.g
    sa = np.zeros(T)
    sc = np.zeros(T)
    sa[keep] = geo.g[keep] / om[keep] + (k[keep] - 1.0) / a
    sc[keep] = a * geo.dg[keep] / om[keep] + geo.dhead[keep]
    return f, sa, sc


def fisher_poly(a: float, c: float, n: int, T: int, N: int = 1) -> FisherInfo:
    """Expected information over ``(a, c)`` as the exact score outer product."""
    if not a < 0.0:
        raise ValueError("Fisher information requires a < 0")
    f, sa, sc = _poly_single_scores(a, c, n, T)
    s = np.vstack((sa, sc))
    M = N * (s * f) @ s.T
    M = 0.5 * (M + M.T)
    if not np.all(np.isfinite(M)) or np.linalg.cond(M) > 1e12:
        raise SingularInformation("Fisher information matrix is numerically singular")
    return FisherInfo(M, np.diag(np.linalg.inv(M)).copy())


# ------------------------------------------------------------- grid over T


def _fit_cell(family, sample, T, shift, n):
    if family == "linear":
        return mle_linear(sample, T, shift)
    return mle_poly(sample, n, T, shift)


def mle_grid_T(
    sample,
    family: str = "linear",
    *,
    n: Optional[int] = None,
    T_margin: int = DEFAULT_T_MARGIN,
    shifts: Optional[Iterable[int]] = None,
    T_range: Optional[Sequence[int]] = None,
    keep_grid: bool = True,
) -> FitResult:
    """Joint MLE over support length ``T``, shift and the family parameters.

    For each shift ``t0`` the candidate supports are
    ``max(sample) - t0, ..., max(sample) - t0 + T_margin`` unless an explicit
    ``T_range`` is given (values below ``max(sample) - t0`` are dropped).
    The best cell wins; exact ties go to the smaller ``T`` and then the
    smaller shift.  ``grid_edge`` is set when the winner sits on the largest
    ``T`` searched for its shift.
    """
    if family not in ("linear", "poly"):
        raise ValueError(f"unknown family {family!r}")
    if family == "poly" and n is None:
        raise ValueError("poly family needs the degree n")
    if T_margin < 0:
        raise ValueError("T_margin must be >= 0")
    x = np.asarray(sample, dtype=np.int64).ravel()
    xmin, xmax = int(x.min()), int(x.max())
    shifts = sorted(set(int(s) for s in (shifts if shifts is not None else [0])))
    bad = [s for s in shifts if s < 0 or s > xmin - 1]
    if bad:
        raise SupportViolation(f"shifts {bad} leave observations below the support")
    grid, best, ranges = [], None, {}
    for t0 in shifts:
        m = xmax - t0
        Ts = list(range(m, m + T_margin + 1)) if T_range is None else sorted(t for t in set(T_range) if t >= m)
        if not Ts:
            raise SupportViolation(f"no candidate T >= {m} for shift {t0}")
        ranges[t0] = (Ts[0], Ts[-1])
        for T in Ts:
            fit = _fit_cell(family, x, T, t0, n)
            grid.append((t0, T, fit.a_hat, fit.c_hat, fit.loglik))
            key = (fit.loglik, -fit.T_hat, -t0)
            if best is None or key > best[0]:
                best = (key, fit, T)
    fit, T_cell = best[1], best[2]
    fit.searched_shifts = tuple(shifts)
    fit.T_ranges = ranges
    fit.grid_edge = (not fit.degenerate) and T_cell == ranges[fit.shift_hat][1] and ranges[fit.shift_hat][0] < ranges[fit.shift_hat][1]
    if keep_grid:
        fit.grid = grid
    return fit


def default_shift_range(sample) -> list[int]:
    """``min-1`` down to ``max(1, min-3)``, plus 0."""
    xmin = int(np.min(sample))
    hi = xmin - 1
    out = set(range(max(1, xmin - 3), hi + 1)) if hi >= 1 else set()
    out.add(0)
    return sorted(out)


# ------------------------------------------------- continuous-T derivatives


def dlogldT_reference(params, sample, form: str = "a") -> float:
    """Derivative of the log-likelihood in ``T`` treated as continuous.

    Only meant for reference curves; ``T`` is an integer everywhere else.
    ``form="b"`` holds the intercept ``b`` fixed instead of the slope.
    """
    x = np.asarray(sample, dtype=float).ravel() - params.shift
    T = float(params.T)
    if isinstance(params, LinearParams):
        a = params.a
        inner = np.array([np.sum(1.0 / (T - np.arange(1, xi))) for xi in x])
        if form == "a":
            return float(np.sum(a / (1.0 + a * (T - x)) + inner))
        b = params.b
        # rho(k) = b (1 - k/T), f(x) = (1 - rho(x)) (b/T)^(x-1) prod (T-k)
        return float(np.sum(-b * x / T**2 / (1.0 - b * (1.0 - x / T)) - (x - 1.0) / T + inner))
    n, c = params.n, params.c
    D = (T - c) ** n
    dD = n * (T - c) ** (n - 1)
    inner = np.array([np.sum(dD / (D - (np.arange(1, xi) - c) ** n)) for xi in x])
    if form == "a":
        a = params.a
        return float(np.sum(a * dD / (1.0 + a * (D - (x - c) ** n)) + inner))
    b = params.b
    ratio = (x - c) ** n / D
    num = -n * b * (x - c) ** n / (T - c) ** (n + 1)
    return float(np.sum(num / (1.0 + b * (ratio - 1.0)) - n * (x - 1.0) / (T - c) + inner))
