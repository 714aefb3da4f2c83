"""Duration data ingestion and empirical diagnostics (PMF, CDF, rho, QQ)."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import EmptyDataset, ParseError

TASKS = ("task1", "task2", "task3")


@dataclass(frozen=True)
class DurationDataset:
    name: str
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.int64)
        if v.size == 0:
            raise EmptyDataset(f"dataset {self.name!r} is empty")
        if np.any(v < 1):
            raise ParseError(f"durations must be >= 1, got {int(v.min())}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return int(self.values.size)

    def summary(self) -> dict:
        return {"name": self.name, "n": self.n, "min": int(self.values.min()), "max": int(self.values.max())}


def _parse_int(tok: str, line: int) -> int:
    tok = tok.strip()
    try:
        v = int(tok)
    except ValueError:
        raise ParseError(f"not an integer: {tok!r}", line=line) from None
    if v < 1:
        raise ParseError(f"durations must be >= 1, got {v}", line=line)
    return v


def parse_lines(text: str, name: str = "data") -> DurationDataset:
    """Newline-separated integers; blank lines and ``#`` comments are skipped."""
    vals = []
    for i, raw in enumerate(text.splitlines(), start=1):
        s = raw.split("#", 1)[0].strip()
        if s:
            vals.append(_parse_int(s, i))
    if not vals:
        raise EmptyDataset(f"no values in {name!r}")
    return DurationDataset(name, np.array(vals))


def parse_csv_column(text: str, name: str = "data", column=0) -> DurationDataset:
    """One column of a CSV file; a non-numeric first row is taken as a header."""
    rows = list(csv.reader(io.StringIO(text)))
    start = 0
    col = column
    if rows and rows[0]:
        head = rows[0]
        try:
            int(head[col if isinstance(col, int) else 0].strip())
        except (ValueError, IndexError):
            start = 1
            if isinstance(col, str):
                if col not in [h.strip() for h in head]:
                    raise ParseError(f"no column named {col!r}", line=1)
                col = [h.strip() for h in head].index(col)
    if isinstance(col, str):
        raise ParseError(f"no header row to find column {col!r}", line=1)
    vals = []
    for i, row in enumerate(rows[start:], start=start + 1):
        if not row or all(not c.strip() for c in row):
            continue
        if col >= len(row):
            raise ParseError(f"missing column {col}", line=i)
        vals.append(_parse_int(row[col], i))
    if not vals:
        raise EmptyDataset(f"no values in {name!r}")
    return DurationDataset(name, np.array(vals))


def ingest(path, format: str = "lines", column=0) -> DurationDataset:
    p = Path(path)
    text = p.read_text()
    if format == "lines":
        return parse_lines(text, p.stem)
    if format in ("csv", "csv-column"):
        return parse_csv_column(text, p.stem, column)
    raise ValueError(f"unknown format {format!r}; use 'lines' or 'csv-column'")


def load_task(name: str) -> DurationDataset:
    """One of the bundled task-duration datasets (``task1``, ``task2``, ``task3``)."""
    if name not in TASKS:
        raise KeyError(f"unknown dataset {name!r}; choose from {TASKS}")
    text = resources.files("sojourn").joinpath("data").joinpath(f"{name}.txt").read_text()
    return parse_lines(text, name)


# ------------------------------------------------------------------ diagnostics


@dataclass
class DiagnosticsBundle:
    k: np.ndarray  # 1..max(values)
    pmf: np.ndarray
    cdf: np.ndarray
    rho: np.ndarray
    rho_is_one: np.ndarray
    rho_smooth: np.ndarray  # nan where rho == 1
    qq_levels: np.ndarray
    qq_empirical: np.ndarray
    qq_fitted: Optional[np.ndarray] = None
    cdf_fitted: Optional[np.ndarray] = None
    quantile_rule: str = "(i-0.5)/n"

    def emitted_rho(self):
        """``(k, rho, smoothed)`` restricted to entries with ``rho != 1``."""
        m = ~self.rho_is_one
        return self.k[m], self.rho[m], self.rho_smooth[m]

    def tables(self) -> dict:
        out = {}
        out["pmf.csv"] = _table(["k", "f", "F"], self.k, self.pmf, self.cdf)
        out["rho.csv"] = _table(["k", "rho", "rho_smooth"], *self.emitted_rho())
        if self.qq_fitted is not None:
            out["qq.csv"] = _table(["level", "empirical", "fitted"], self.qq_levels, self.qq_empirical, self.qq_fitted)
            out["cdf_overlay.csv"] = _table(["k", "empirical", "fitted"], self.k, self.cdf, self.cdf_fitted)
        return out


def _table(header, *cols) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in zip(*cols):
        w.writerow([int(x) if isinstance(x, (int, np.integer)) else repr(float(x)) for x in row])
    return buf.getvalue()


def empirical_rho(pmf: np.ndarray) -> np.ndarray:
    """Continuation probabilities of a binned PMF from right-accumulated tails."""
    tail = np.cumsum(pmf[::-1])[::-1]
    rho = np.zeros_like(pmf)
    rho[:-1] = np.minimum(tail[1:] / tail[:-1], 1.0)
    return rho


def moving_average3(y: np.ndarray) -> np.ndarray:
    """Mean of each point and its immediate neighbours; edges use what exists."""
    y = np.asarray(y, dtype=float)
    if y.size < 2:
        return y.copy()
    s = np.convolve(y, np.ones(3), mode="same")
    cnt = np.convolve(np.ones_like(y), np.ones(3), mode="same")
    return s / cnt


def diagnose(ds: DurationDataset, fit=None) -> DiagnosticsBundle:
    """Empirical summaries of ``ds``; QQ and CDF overlays are added when ``fit`` is given.

    ``rho`` values equal to 1 (bins with no mass) are flagged and the
    smoothing runs over the remaining points only.
    """
    x = ds.values
    m = int(x.max())
    k = np.arange(1, m + 1)
    pmf = np.bincount(x, minlength=m + 1)[1:] / ds.n
    cdf = np.minimum(np.cumsum(pmf), 1.0)
    cdf[-1] = 1.0
    rho = empirical_rho(pmf)
    is_one = rho >= 1.0
    smooth = np.full(m, np.nan)
    smooth[~is_one] = moving_average3(rho[~is_one])
    levels = (np.arange(1, ds.n + 1) - 0.5) / ds.n
    emp_q = np.sort(x)
    bundle = DiagnosticsBundle(k, pmf, cdf, rho, is_one, smooth, levels, emp_q)
    if fit is not None:
        fpmf = fit.pmf() if hasattr(fit, "pmf") else fit
        bundle.qq_fitted = fpmf.quantile(levels)
        Fk = np.zeros(m)
        F = fpmf.cdf()
        rel = k - fpmf.shift
        inside = (rel >= 1) & (rel <= fpmf.T)
        Fk[inside] = F[rel[inside] - 1]
        Fk[rel > fpmf.T] = 1.0
        bundle.cdf_fitted = Fk
    return bundle
