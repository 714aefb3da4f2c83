import numpy as np
import pytest

from sojourn.core import geometric_rho
from sojourn.diagnostics import (
    DurationDataset,
    diagnose,
    empirical_rho,
    ingest,
    load_task,
    moving_average3,
    parse_csv_column,
    parse_lines,
)
from sojourn.errors import EmptyDataset, ParseError
from sojourn.estimation import mle_linear
from sojourn.sampling import sample_inverse_cdf


@pytest.mark.parametrize(
    "name,n,lo,hi",
    [("task1", 178, 4, 164), ("task2", 187, 3, 201), ("task3", 187, 12, 221)],
)
def test_bundled_tasks(name, n, lo, hi):
    ds = load_task(name)
    assert (ds.n, int(ds.values.min()), int(ds.values.max())) == (n, lo, hi)


def test_parse_error_names_line():
    with pytest.raises(ParseError, match="line 3"):
        parse_lines("4\n5\nabc\n6\n")
    with pytest.raises(ParseError, match="line 2"):
        parse_lines("4\n0\n")


def test_empty_dataset():
    with pytest.raises(EmptyDataset):
        parse_lines("\n# nothing\n\n")
    with pytest.raises(EmptyDataset):
        DurationDataset("x", np.array([], dtype=int))


def test_csv_column(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("id,dur\n1,5\n2,7\n3,9\n")
    assert ingest(p, "csv-column", "dur").values.tolist() == [5, 7, 9]
    assert parse_csv_column("5\n6\n").values.tolist() == [5, 6]
    with pytest.raises(ParseError, match="line 3"):
        parse_csv_column("dur\n5\nx\n", column="dur")


def test_lines_file(tmp_path):
    p = tmp_path / "d.txt"
    p.write_text("3\n\n4\n")
    ds = ingest(p)
    assert ds.name == "d" and ds.values.tolist() == [3, 4]


def test_empirical_rho_inverts_pmf():
    rho = empirical_rho(np.array([0.5, 0.25, 0.25]))
    assert np.allclose(rho, [0.5, 0.5, 0.0])


def test_moving_average():
    assert np.allclose(moving_average3(np.array([1.0, 2.0, 3.0, 4.0])), [1.5, 2.0, 3.0, 3.5])


def test_bundle_invariants():
    b = diagnose(load_task("task2"))
    assert np.all(np.diff(b.cdf) >= 0) and b.cdf[-1] == 1.0
    assert np.all((b.rho >= 0) & (b.rho <= 1))
    k, r, s = b.emitted_rho()
    assert np.all(r < 1.0) and np.all(np.isfinite(s))
    # no-mass bins below the minimum are exactly the ones flagged at the start
    assert b.rho_is_one[:2].all()


def test_geometric_rho_flat():
    p = 0.8
    x = sample_inverse_cdf(geometric_rho(p, 60), 20000, seed=1).values
    b = diagnose(DurationDataset("geo", x))
    k, r, s = b.emitted_rho()
    # use bins with enough survivors for a tight binomial band
    tail = np.array([np.sum(x > kk - 1) for kk in k])
    ok = tail >= 1000
    band = 4 * np.sqrt(p * (1 - p) / tail[ok])
    assert np.all(np.abs(s[ok] - p) <= band + 0.01)


def test_qq_self_consistency():
    from sojourn.families import LinearParams, linear_rho

    x = sample_inverse_cdf(linear_rho(LinearParams(-0.05, 20)), 5000, seed=2).values
    fit = mle_linear(x, 20)
    b = diagnose(DurationDataset("lin", x), fit)
    assert np.max(np.abs(b.qq_empirical - b.qq_fitted)) <= 0.1 * (x.max() - x.min())
    assert np.all(np.diff(b.cdf_fitted) >= 0) and b.cdf_fitted[-1] <= 1.0
    assert set(b.tables()) == {"pmf.csv", "rho.csv", "qq.csv", "cdf_overlay.csv"}


def test_task1_rho_nonlinear():
    b = diagnose(load_task("task1"))
    k, r, s = b.emitted_rho()
    # smoothed rho swings by far more than sampling noise
    assert s.max() - s.min() > 0.2
    X = np.vander(k.astype(float), 3)
    coef, res, *_ = np.linalg.lstsq(X, r, rcond=None)
    sigma2 = res[0] / (len(r) - 3)
    cov = sigma2 * np.linalg.inv(X.T @ X)
    t_quad = coef[0] / np.sqrt(cov[0, 0])
    assert abs(t_quad) > 2.0


def test_tables_parse_back():
    import csv
    import io

    b = diagnose(load_task("task3"))
    rows = list(csv.DictReader(io.StringIO(b.tables()["pmf.csv"])))
    assert [float(r["f"]) for r in rows] == b.pmf.tolist()
