"""Command-line entry point: ``sojourn {fit,simulate,study,smm,diagnose}``.

Exit codes: 0 success, 2 bad input data or spec, 3 solver failure.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import diagnostics, errors
from .core import SojournPmf, pmf_from_rho
from .estimation import DEFAULT_T_MARGIN, default_shift_range, mle_grid_T
from .families import LinearParams, PolyParams, params_from_dict, params_to_dict, rho_for
from .sampling import sample_inverse_cdf
from .smm import SmmSpec, stationary
from .study import PRESETS, StudyConfig, preset, run_study

EXIT_OK, EXIT_DATA, EXIT_SOLVER = 0, 2, 3

DATA_ERRORS = (
    errors.ParseError,
    errors.EmptyDataset,
    errors.SupportViolation,
    errors.InvalidSpec,
    errors.InvalidDistribution,
    errors.OutOfBounds,
    errors.EmptyInterval,
    errors.Reducible,
    FileNotFoundError,
    json.JSONDecodeError,
    KeyError,
)
SOLVER_ERRORS = (errors.NoConvergence, errors.NoFeasibleStart, errors.SingularInformation, errors.DegenerateTail)


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.replace(" ", "").split(",") if t]


def parse_shift_range(spec: str | None, sample) -> list[int]:
    """``default``, ``full`` (0..min-1), ``lo:hi`` (inclusive) or a comma list."""
    xmin = int(np.min(sample))
    if spec is None or spec == "default":
        return default_shift_range(sample)
    if spec == "full":
        return list(range(0, xmin))
    if ":" in spec:
        lo, hi = (int(t) for t in spec.split(":", 1))
        return list(range(lo, hi + 1))
    return _ints(spec)


def _load_data(path: str, fmt: str, column):
    p = Path(path)
    if not p.exists() and path in diagnostics.TASKS:
        return diagnostics.load_task(path)
    col = int(column) if column is not None and str(column).isdigit() else (column if column is not None else 0)
    return diagnostics.ingest(p, fmt, col)


def _out_dir(args) -> Path | None:
    if args.out is None:
        return None
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write(d: Path | None, name: str, text: str) -> None:
    if d is not None:
        (d / name).write_text(text)


def _params_from_fit_json(d: dict):
    """Accept either a parameter dict or a saved fit summary."""
    if "a_hat" not in d:
        return params_from_dict(d)
    if d.get("degenerate"):
        return SojournPmf(np.ones(1), shift=int(d.get("shift_hat", 0)))
    if d["family"] == "linear":
        return LinearParams(d["a_hat"], int(d["T_hat"]), int(d["shift_hat"]))
    return PolyParams(d["a_hat"], d["c_hat"], int(d["n"]), int(d["T_hat"]), int(d["shift_hat"]))


def _pmf_of(p) -> SojournPmf:
    if isinstance(p, SojournPmf):
        return p
    return SojournPmf(pmf_from_rho(rho_for(p)).probs, shift=p.shift)


# ------------------------------------------------------------------ commands


def cmd_fit(args) -> int:
    ds = _load_data(args.data, args.format, args.column)
    shifts = parse_shift_range(args.shift_range, ds.values)
    T_range = range(args.T_min, args.T_max + 1) if args.T_max is not None else None
    fit = mle_grid_T(
        ds.values, args.family, n=args.n if args.family == "poly" else None,
        T_margin=args.t_margin, shifts=shifts, T_range=T_range,
    )
    summary = fit.to_dict()
    summary["dataset"] = ds.summary()
    out = _out_dir(args)
    _write(out, "fit.json", json.dumps(summary, indent=2))
    _write(out, "grid.csv", fit.grid_csv())
    _write(out, "pmf.csv", fit.pmf().to_csv())
    print(json.dumps(summary, indent=2))
    if fit.grid_edge:
        print(f"warning: optimum at the largest T searched ({fit.T_hat}); widen --t-margin", file=sys.stderr)
    return EXIT_OK


def _params_from_args(args):
    if args.params:
        return params_from_dict(json.loads(Path(args.params).read_text()))
    if args.a is None or args.T is None:
        raise errors.InvalidSpec("give --params FILE or --a and --T")
    if args.family == "linear":
        return LinearParams(args.a, args.T, args.shift)
    if args.c is None:
        raise errors.InvalidSpec("poly family needs --c")
    return PolyParams(args.a, args.c, args.n, args.T, args.shift)


def cmd_simulate(args) -> int:
    p = _params_from_args(args)
    batch = sample_inverse_cdf(rho_for(p), args.size, args.seed, shift=p.shift, source_params=p)
    out = _out_dir(args)
    if out is None:
        sys.stdout.write(batch.to_text())
    else:
        _write(out, "sample.txt", batch.to_text())
        _write(out, "params.json", json.dumps({**params_to_dict(p), "seed": args.seed, "size": args.size}, indent=2))
    return EXIT_OK


def cmd_study(args) -> int:
    if args.preset:
        cfg = preset(args.preset, full_scale=args.full_scale, seed=args.seed, workers=args.workers)
        if args.trials is not None:
            cfg.trials = args.trials
        if args.sizes:
            cfg.sample_sizes = _ints(args.sizes)
    else:
        p = _params_from_args(args)
        cfg = StudyConfig(
            truth=p,
            sample_sizes=_ints(args.sizes or "10,100,1000"),
            trials=args.trials or 1000,
            seed=args.seed,
            T_known=not args.unknown_T,
            T_margin=args.t_margin,
            T_search="fixed" if args.T_search_max is not None else "anchored",
            T_max=args.T_search_max,
            workers=args.workers,
        )
    res = run_study(cfg)
    out = _out_dir(args)
    _write(out, "study.csv", res.to_csv())
    _write(out, "study_long.csv", res.to_long_csv())
    _write(out, "study.json", res.to_json())
    sys.stdout.write(res.to_csv())
    return EXIT_OK


def cmd_smm(args) -> int:
    spec = SmmSpec.from_json(Path(args.spec).read_text())
    res = stationary(spec)
    out = _out_dir(args)
    _write(out, "pi.csv", res.to_csv())
    _write(out, "summary.json", json.dumps(res.summary(), indent=2))
    print(json.dumps(res.summary(), indent=2))
    return EXIT_OK


def cmd_diagnose(args) -> int:
    ds = _load_data(args.data, args.format, args.column)
    fitted = None
    if args.fit:
        fitted = _pmf_of(_params_from_fit_json(json.loads(Path(args.fit).read_text())))
    bundle = diagnostics.diagnose(ds, fitted)
    out = _out_dir(args)
    tables = bundle.tables()
    for name, text in tables.items():
        _write(out, name, text)
    meta = {**ds.summary(), "quantile_rule": bundle.quantile_rule, "smoothing": "3-bin moving average",
            "rho_equal_one_dropped": int(bundle.rho_is_one.sum()), "files": sorted(tables)}
    _write(out, "diagnostics.json", json.dumps(meta, indent=2))
    print(json.dumps(meta, indent=2))
    return EXIT_OK


# ------------------------------------------------------------------ parser


def _data_args(sp):
    sp.add_argument("data", help="file of durations, or a bundled dataset name (task1, task2, task3)")
    sp.add_argument("--format", choices=["lines", "csv-column"], default="lines")
    sp.add_argument("--column", default=None, help="CSV column index or header name")


def _param_args(sp):
    sp.add_argument("--family", choices=["linear", "poly"], default="linear")
    sp.add_argument("--params", help="JSON file with family, a, c, n, T, shift")
    sp.add_argument("--a", type=float)
    sp.add_argument("--c", type=float)
    sp.add_argument("--n", type=int, default=3)
    sp.add_argument("--T", type=int)
    sp.add_argument("--shift", type=int, default=0)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sojourn", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("fit", help="maximum-likelihood fit with T and shift search")
    _data_args(sp)
    sp.add_argument("--family", choices=["linear", "poly"], default="poly")
    sp.add_argument("--n", type=int, default=3, help="polynomial degree")
    sp.add_argument("--t-margin", type=int, default=DEFAULT_T_MARGIN)
    sp.add_argument("--shift-range", default="default", help="default | full | lo:hi | comma list")
    sp.add_argument("--T-min", type=int, default=1)
    sp.add_argument("--T-max", type=int, default=None, help="search T in [T-min, T-max] instead of a margin")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("simulate", help="draw a seeded sample")
    _param_args(sp)
    sp.add_argument("--size", type=int, default=1000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("study", help="Monte-Carlo estimator study")
    sp.add_argument("--preset", choices=PRESETS)
    _param_args(sp)
    sp.add_argument("--sizes", help="comma-separated sample sizes")
    sp.add_argument("--trials", type=int)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--unknown-T", action="store_true")
    sp.add_argument("--t-margin", type=int, default=DEFAULT_T_MARGIN)
    sp.add_argument("--T-search-max", type=int, help="search T in [T, this] instead of anchoring at max(sample)")
    sp.add_argument("--full-scale", action="store_true", help="published trial counts and sizes (hours)")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_study)

    sp = sub.add_parser("smm", help="stationary law of a semi-Markov chain")
    sp.add_argument("spec", help="JSON: {states, T, rho, jump} or {states, T, rho, A}")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_smm)

    sp = sub.add_parser("diagnose", help="empirical PMF, CDF, rho and QQ data")
    _data_args(sp)
    sp.add_argument("--fit", help="fit.json from `fit`, or a parameter JSON")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_diagnose)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SOLVER_ERRORS as e:
        print(f"solver error: {e}", file=sys.stderr)
        return EXIT_SOLVER
    except DATA_ERRORS as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (errors.SojournError, ValueError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
