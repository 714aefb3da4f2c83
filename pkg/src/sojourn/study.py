"""Monte-Carlo studies of the estimators.

A study draws ``trials`` independent samples at each sample size, fits them,
and reports bias, variance and MSE of the estimates next to the inverse
Fisher information at the true parameters.  Unknown-``T`` studies also
report how often ``T`` is recovered and the l1 distance between the true
and fitted PMFs.

Trial ``j`` at size index ``i`` always uses the random stream
``(seed, i, j)``, so results do not depend on how trials are distributed
over worker processes.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .core import SojournPmf, pmf_from_rho
from .errors import SojournError
from .estimation import (
    FitResult,
    _Suff,
    counts_for,
    fisher_linear,
    fisher_poly,
    mle_grid_T,
    mle_linear,
    mle_poly,
)
from .families import LinearParams, PolyParams, linear_bounds, linear_rho, poly_min_a, rho_for
from .sampling import sample_inverse_cdf

Params = Union[LinearParams, PolyParams]

CSV_COLUMNS = [
    "n", "bias_a", "var_a", "mse_a", "inv_fi_a",
    "bias_c", "var_c", "mse_c", "inv_fi_c", "p_T_correct", "l1_mean",
]


@dataclass
class StudyConfig:
    truth: Params
    sample_sizes: Sequence[int]
    trials: int = 1000
    seed: int = 0
    T_known: bool = True
    T_margin: int = 200
    # "anchored": T from max(sample) up by T_margin; "fixed": T in [truth.T, T_max]
    T_search: str = "anchored"
    T_max: Optional[int] = None
    estimator: str = "exact"
    a_grid_points: int = 500
    a_grid_min: float = 1e-3
    trim_iqr: float = 1.5
    workers: int = 1

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        sizes = [int(s) for s in self.sample_sizes]
        if not sizes or any(s < 1 for s in sizes):
            raise ValueError("sample sizes must be positive")
        if sizes != sorted(sizes):
            raise ValueError("sample sizes must be sorted")
        self.sample_sizes = sizes
        if self.T_search not in ("anchored", "fixed"):
            raise ValueError("T_search must be 'anchored' or 'fixed'")
        if self.T_search == "fixed" and not self.T_known and self.T_max is None:
            raise ValueError("fixed T search needs T_max")
        if self.estimator not in ("exact", "grid"):
            raise ValueError("estimator must be 'exact' or 'grid'")
        if self.estimator == "grid" and not isinstance(self.truth, LinearParams):
            raise ValueError("the a-grid estimator is only available for the linear model")

    @property
    def family(self) -> str:
        return self.truth.family


@dataclass
class SizeStats:
    n: int
    bias_a: float
    var_a: float
    mse_a: float
    inv_fi_a: float = math.nan
    var_a_trimmed: float = math.nan
    bias_c: float = math.nan
    var_c: float = math.nan
    mse_c: float = math.nan
    inv_fi_c: float = math.nan
    var_c_trimmed: float = math.nan
    bias_T: float = math.nan
    var_T: float = math.nan
    p_T_correct: float = math.nan
    l1_mean: float = math.nan
    l1_std: float = math.nan
    failed: int = 0
    degenerate: int = 0


@dataclass
class StudyResult:
    config: StudyConfig
    rows: list
    T_search_used: str
    trim_rule: str
    estimates: dict = field(default_factory=dict, repr=False)

    def row(self, n: int) -> SizeStats:
        for r in self.rows:
            if r.n == n:
                return r
        raise KeyError(n)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([r.n] + [repr(float(getattr(r, c))) for c in CSV_COLUMNS[1:]])
        return buf.getvalue()

    def to_long_csv(self) -> str:
        """One ``n,parameter,statistic,value`` line per number, for plotting."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "parameter", "statistic", "value"])
        for r in self.rows:
            for name, val in asdict(r).items():
                if name == "n":
                    continue
                stat, par = name, ""
                for p in ("a", "c", "T"):
                    if f"_{p}" in name and not name.startswith("p_T"):
                        stat, par = name.replace(f"_{p}", "", 1), p
                        break
                w.writerow([r.n, par, stat, repr(float(val))])
        return buf.getvalue()

    def to_json(self) -> str:
        from .families import params_to_dict

        cfg = asdict(self.config)
        cfg["truth"] = params_to_dict(self.config.truth)
        return json.dumps(
            {
                "config": cfg,
                "T_search_used": self.T_search_used,
                "trim_rule": self.trim_rule,
                "rows": [asdict(r) for r in self.rows],
            },
            indent=2,
        )


# ------------------------------------------------------------------ helpers


def l1_pmf_distance(true_params, fit) -> float:
    """``sum |f - f_hat|`` over the union of the two (shifted) supports."""
    f_true = _as_pmf(true_params)
    f_fit = _as_pmf(fit)
    lo = min(f_true.shift, f_fit.shift) + 1
    hi = max(f_true.shift + f_true.T, f_fit.shift + f_fit.T)
    ks = np.arange(lo, hi + 1)
    return float(np.abs(f_true.prob(ks) - f_fit.prob(ks)).sum())


def _as_pmf(obj) -> SojournPmf:
    if isinstance(obj, SojournPmf):
        return obj
    if isinstance(obj, FitResult):
        return obj.pmf()
    return SojournPmf(pmf_from_rho(rho_for(obj)).probs, shift=obj.shift)


def expected_loglik_curve(a0: float, T: int, a_grid) -> np.ndarray:
    """One-observation expected log-likelihood ``E_{a0}[log f(K; a)]`` on a grid."""
    f0 = pmf_from_rho(linear_rho(LinearParams(a0, T))).probs
    keep = f0 > 0
    out = []
    for a in np.asarray(a_grid, dtype=float):
        f = pmf_from_rho(linear_rho(LinearParams(float(a), T))).probs
        with np.errstate(divide="ignore"):
            out.append(float(f0[keep] @ np.log(f[keep])))
    return np.array(out)


def mle_linear_agrid(sample, T: int, shift: int = 0, points: int = 500, a_min: float = 1e-3) -> FitResult:
    """Grid-search MLE over ``points`` slopes in ``[1/(1-T), -a_min]``."""
    from .estimation import _lin_loglik

    st = _Suff(counts_for(sample, T, shift))
    if T == 1 or st.excess == 0.0:
        return FitResult("linear", 0.0, 1, shift, 0.0, True, degenerate=True)
    grid = np.linspace(linear_bounds(T).lo, -a_min, points)
    ll = np.array([_lin_loglik(a, T, st) for a in grid])
    i = int(np.argmax(ll))
    return FitResult("linear", float(grid[i]), T, shift, float(ll[i]), True,
                     solver_iterations=points, at_boundary=i in (0, points - 1))


def trimmed_variance(values: np.ndarray, k: float = 1.5) -> float:
    """Variance after dropping points beyond ``k`` interquartile ranges."""
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if v.size < 2:
        return math.nan
    q1, q3 = np.percentile(v, [25, 75])
    iqr = q3 - q1
    keep = v[(v >= q1 - k * iqr) & (v <= q3 + k * iqr)]
    return float(np.var(keep)) if keep.size else math.nan


def _fit_one(cfg: StudyConfig, x: np.ndarray) -> FitResult:
    truth = cfg.truth
    if cfg.T_known:
        if cfg.family == "linear":
            if cfg.estimator == "grid":
                return mle_linear_agrid(x, truth.T, truth.shift, cfg.a_grid_points, cfg.a_grid_min)
            return mle_linear(x, truth.T, truth.shift)
        return mle_poly(x, truth.n, truth.T, truth.shift)
    if cfg.estimator == "grid":
        return _agrid_unknown_T(cfg, x)
    T_range = None
    if cfg.T_search == "fixed":
        T_range = range(truth.T, cfg.T_max + 1)
    return mle_grid_T(
        x, cfg.family, n=getattr(truth, "n", None), T_margin=cfg.T_margin,
        shifts=[truth.shift], T_range=T_range, keep_grid=False,
    )


def _agrid_unknown_T(cfg, x):
    truth = cfg.truth
    m = int(x.max()) - truth.shift
    Ts = range(m, m + cfg.T_margin + 1) if cfg.T_search == "anchored" else range(max(truth.T, m), cfg.T_max + 1)
    best = None
    for T in Ts:
        fit = mle_linear_agrid(x, T, truth.shift, cfg.a_grid_points, cfg.a_grid_min)
        if best is None or fit.loglik > best.loglik:
            best = fit
    return best


def _run_chunk(args):
    cfg, size_index, n, trials = args
    truth = cfg.truth
    rho = rho_for(truth)
    out = []
    for j in trials:
        batch = sample_inverse_cdf(rho, n, cfg.seed, stream=(size_index, j), shift=truth.shift)
        try:
            fit = _fit_one(cfg, batch.values)
        except (SojournError, FloatingPointError, ValueError):
            out.append((j, math.nan, math.nan, -1, math.nan, False, True))
            continue
        l1 = l1_pmf_distance(truth, fit) if not cfg.T_known else math.nan
        c = fit.c_hat if fit.c_hat is not None else math.nan
        out.append((j, fit.a_hat, c, fit.T_hat, l1, fit.degenerate, False))
    return size_index, out


def _workers(cfg: StudyConfig) -> int:
    env = os.environ.get("SOJOURN_THREADS")
    w = cfg.workers
    if env:
        w = min(w, int(env)) if w > 1 else w
    return max(1, int(w))


def run_study(cfg: StudyConfig) -> StudyResult:
    """Run the configured Monte-Carlo study; failed fits are counted, not raised."""
    truth = cfg.truth
    workers = _workers(cfg)
    jobs = []
    chunk = max(1, math.ceil(cfg.trials / (4 * workers)))
    for i, n in enumerate(cfg.sample_sizes):
        for s in range(0, cfg.trials, chunk):
            jobs.append((cfg, i, n, range(s, min(s + chunk, cfg.trials))))
    per_size: dict[int, list] = {i: [] for i in range(len(cfg.sample_sizes))}
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_run_chunk, jobs))
    else:
        results = [_run_chunk(job) for job in jobs]
    for i, rows in results:
        per_size[i].extend(rows)

    rows, estimates = [], {}
    for i, n in enumerate(cfg.sample_sizes):
        recs = sorted(per_size[i])
        ok = [r for r in recs if not r[6]]
        a = np.array([r[1] for r in ok])
        c = np.array([r[2] for r in ok])
        Ts = np.array([r[3] for r in ok], dtype=float)
        l1 = np.array([r[4] for r in ok])
        estimates[n] = {"a": a, "c": c, "T": Ts, "l1": l1}
        st = SizeStats(n=n, **_moments(a, truth.a, "a"), failed=len(recs) - len(ok),
                       degenerate=int(sum(r[5] for r in ok)))
        st.var_a_trimmed = trimmed_variance(a, cfg.trim_iqr)
        inv = _inverse_fi(truth, n)
        st.inv_fi_a = inv[0]
        if cfg.family == "poly":
            for k, v in _moments(c, truth.c, "c").items():
                setattr(st, k, v)
            st.var_c_trimmed = trimmed_variance(c, cfg.trim_iqr)
            st.inv_fi_c = inv[1]
        if not cfg.T_known:
            st.bias_T = float(np.mean(Ts - truth.T)) if Ts.size else math.nan
            st.var_T = float(np.var(Ts)) if Ts.size else math.nan
            st.p_T_correct = float(np.mean(Ts == truth.T)) if Ts.size else math.nan
            st.l1_mean = float(np.mean(l1)) if l1.size else math.nan
            st.l1_std = float(np.std(l1, ddof=1)) if l1.size > 1 else math.nan
        rows.append(st)
    search = "known" if cfg.T_known else cfg.T_search
    return StudyResult(cfg, rows, search, f"iqr*{cfg.trim_iqr}", estimates)


def _moments(est: np.ndarray, true: float, name: str) -> dict:
    # Population (ddof=0) variance so that mse = var + bias^2 holds exactly.
    if est.size == 0:
        return {f"bias_{name}": math.nan, f"var_{name}": math.nan, f"mse_{name}": math.nan}
    err = est - true
    return {
        f"bias_{name}": float(np.mean(err)),
        f"var_{name}": float(np.var(est)),
        f"mse_{name}": float(np.mean(err * err)),
    }


def _inverse_fi(truth, n):
    try:
        if isinstance(truth, LinearParams):
            return fisher_linear(truth.a, truth.T, n).crlb
        return fisher_poly(truth.a, truth.c, truth.n, truth.T, n).crlb
    except (SojournError, ValueError):
        return np.array([math.nan, math.nan])


# ------------------------------------------------------------------ presets

DESK_SIZES = (10, 100, 1000, 5000)
PAPER_SIZES = (2, 3, 4, 5, 6, 8, 10, 15, 20, 50, 100, 500, 1000, 5000, 10000, 50000)


def preset(name: str, *, full_scale: bool = False, seed: int = 0, workers: int = 1) -> StudyConfig:
    """Named study configurations.

    Desk scale keeps runs to minutes; ``full_scale`` restores the published
    trial counts and sample sizes up to 50,000 (hours of CPU time).
    """
    poly_truth = PolyParams(0.5 * poly_min_a(3, 5.0, 10), 5.0, 3, 10)
    table = {
        "linear-a01": dict(truth=LinearParams(-0.1, 10), sample_sizes=DESK_SIZES, trials=1000),
        "linear-a00556": dict(truth=LinearParams(-0.0556, 10), sample_sizes=DESK_SIZES, trials=1000),
        "linear-a001": dict(truth=LinearParams(-0.01, 10), sample_sizes=DESK_SIZES, trials=1000),
        "linear-unknown-T": dict(truth=LinearParams(-0.1, 10), sample_sizes=(100, 1000, 5000),
                                 trials=100, T_known=False),
        "l1-a01": dict(truth=LinearParams(-0.1, 10), sample_sizes=(5, 20, 100, 1000), trials=1000,
                       T_known=False, T_search="fixed", T_max=20),
        "l1-a00111": dict(truth=LinearParams(-0.0111, 10), sample_sizes=(5, 20, 100, 1000), trials=1000,
                          T_known=False, T_search="fixed", T_max=20),
        "poly-n3": dict(truth=poly_truth, sample_sizes=(100, 1000, 5000), trials=200),
    }
    if name not in table:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(table)}")
    kw = dict(table[name])
    if full_scale:
        kw["sample_sizes"] = PAPER_SIZES
        kw["trials"] = 100 if not kw.get("T_known", True) and kw.get("T_search") != "fixed" else 10000
    return StudyConfig(seed=seed, workers=workers, **kw)


PRESETS = ("linear-a01", "linear-a00556", "linear-a001", "linear-unknown-T", "l1-a01", "l1-a00111", "poly-n3")
