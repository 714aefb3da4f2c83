import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import (
    central_diff,
    linear_loglik_lgamma,
    linear_pmf_direct,
    loglik_from_pmf,
    poly_loglik_realT,
    poly_pmf_direct,
)
from sojourn.diagnostics import load_task
from sojourn.errors import OutOfBounds, SingularInformation, SupportViolation
from sojourn.estimation import (
    FitResult,
    default_shift_range,
    dlogldT_reference,
    fisher_linear,
    fisher_poly,
    hessian_linear,
    loglik_linear,
    loglik_poly,
    mle_grid_T,
    mle_linear,
    mle_poly,
    score_linear,
    score_poly,
)
from sojourn.families import LinearParams, PolyParams, linear_bounds, linear_rho, poly_bounds, poly_min_a, poly_rho
from sojourn.sampling import sample_inverse_cdf

POLY_TRUTH = PolyParams(0.5 * poly_min_a(3, 5.0, 10), 5.0, 3, 10)


def _sample(rng, T, size):
    return rng.integers(1, T + 1, size=size)


@st.composite
def linear_points(draw):
    T = draw(st.integers(3, 40))
    q = draw(st.floats(0.02, 0.98))
    a = linear_bounds(T).quantile(q)
    seed = draw(st.integers(0, 2**32 - 1))
    x = _sample(np.random.default_rng(seed), T, draw(st.integers(1, 30)))
    return a, T, x


@st.composite
def poly_points(draw, n=3):
    T = draw(st.integers(4, 30))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    x = _sample(rng, T, draw(st.integers(2, 30)))
    c = draw(st.floats(float(x.min() - T), T - 1.0))
    amin = poly_bounds(n, c, T).lo
    a = draw(st.floats(0.05, 0.95)) * amin
    return a, c, T, x


def _rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


# ---------------------------------------------------------------- linear likelihood


def test_single_observation_at_one():
    for a in (-0.1, -0.05, -0.001):
        assert math.isclose(loglik_linear(a, 10, [1]), math.log(1 + a * 9), rel_tol=1e-14)


def test_sign_guard_linear():
    assert loglik_linear(0.0, 10, [1, 2, 3]) == -math.inf
    assert loglik_linear(0.01, 10, [1, 3, 5]) == -math.inf


def test_loglik_diverges_near_zero():
    vals = [loglik_linear(a, 10, [1, 2, 4]) for a in (-1e-2, -1e-5, -1e-10, -1e-100)]
    assert all(np.diff(vals) < 0) and vals[-1] < -400


def test_support_violation():
    with pytest.raises(SupportViolation):
        loglik_linear(-0.1, 5, [1, 6])
    with pytest.raises(SupportViolation):
        mle_linear([2, 3], 5, shift=2)


@given(linear_points())
@settings(max_examples=100, deadline=None)
def test_linear_loglik_matches_pmf(pt):
    a, T, x = pt
    f = linear_pmf_direct(a, T)
    if np.any(f[x - 1] == 0):
        return
    assert abs(loglik_linear(a, T, x) - loglik_from_pmf(f, x)) <= 1e-10 * max(1.0, abs(loglik_from_pmf(f, x)))


@given(linear_points())
@settings(max_examples=100, deadline=None)
def test_linear_score_finite_difference(pt):
    a, T, x = pt
    h = 1e-6 * abs(a)
    fd = central_diff(lambda v: loglik_linear(v, T, x), a, h)
    assert _rel(score_linear(a, T, x), fd) <= 1e-5
    assert hessian_linear(a, T, x) <= 0.0


def test_all_ones_score_positive():
    T, x = 10, np.ones(7, dtype=int)
    for a in linear_bounds(T).grid(20)[1:]:
        s = score_linear(a, T, x)
        assert s > 0 and math.isclose(s, 7 * (T - 1) / (1 + a * (T - 1)), rel_tol=1e-12)


def test_linear_concavity_on_grid():
    rng = np.random.default_rng(0)
    for _ in range(100):
        T = int(rng.integers(3, 30))
        x = _sample(rng, T, int(rng.integers(1, 40)))
        grid = linear_bounds(T).grid(100)[1:]
        ll = np.array([loglik_linear(a, T, x) for a in grid])
        assert np.all(np.diff(ll, 2) <= 1e-9 * np.maximum(1.0, np.abs(ll[1:-1])))


# ---------------------------------------------------------------- linear MLE


def test_mle_linear_large_sample():
    x = sample_inverse_cdf(linear_rho(LinearParams(-0.1, 10)), 50000, seed=17).values
    fit = mle_linear(x, 10)
    sd = math.sqrt(fisher_linear(-0.1, 10, 50000).crlb[0])
    assert abs(fit.a_hat + 0.1) <= 3 * sd and fit.converged


def test_mle_linear_all_ones():
    fit = mle_linear([1, 1, 1, 1], 10)
    assert fit.degenerate and fit.T_hat == 1 and fit.a_hat == 0.0


def test_mle_linear_lower_boundary():
    # Every draw at T: score at the lower bound is (N(T-1))/lo < 0, so the
    # concave likelihood peaks at the boundary.
    T = 8
    lo = linear_bounds(T).lo
    assert score_linear(lo, T, [T] * 5) < 0
    fit = mle_linear([T] * 5, T)
    assert fit.a_hat == lo and fit.at_boundary


def test_mle_linear_optimal_on_grid():
    rng = np.random.default_rng(1)
    for _ in range(50):
        T = int(rng.integers(3, 25))
        x = _sample(rng, T, int(rng.integers(2, 40)))
        if np.all(x == 1):
            continue
        fit = mle_linear(x, T)
        grid = linear_bounds(T).grid(1000)
        best = max(loglik_linear(a, T, x) for a in grid)
        assert fit.loglik >= best - 1e-9 * abs(best)
        assert fit.a_hat in linear_bounds(T)


# ---------------------------------------------------------------- linear Fisher


def test_fisher_linear_scaling_and_guard():
    one = fisher_linear(-0.1, 10, 1).matrix[0, 0]
    assert math.isclose(fisher_linear(-0.1, 10, 2).matrix[0, 0], 2 * one, rel_tol=1e-15)
    crlbs = [fisher_linear(-0.1, 10, n).crlb[0] for n in (1, 10, 100)]
    assert crlbs[0] > crlbs[1] > crlbs[2] > 0
    with pytest.raises(ValueError):
        fisher_linear(0.0, 10)
    small = [fisher_linear(a, 10).matrix[0, 0] for a in (-1e-2, -1e-4, -1e-6)]
    assert small[0] < small[1] < small[2]


def test_fisher_linear_monte_carlo():
    a, T = -0.1, 10
    x = sample_inverse_cdf(linear_rho(LinearParams(a, T)), 10**6, seed=99).values.astype(float)
    s = (T - x) / (1 + a * (T - x)) + (x - 1) / a
    mc = np.mean(s * s)
    assert _rel(mc, fisher_linear(a, T).matrix[0, 0]) < 0.01


# ---------------------------------------------------------------- polynomial likelihood


def test_poly_reduces_to_linear():
    rng = np.random.default_rng(2)
    for _ in range(30):
        T = int(rng.integers(3, 20))
        x = _sample(rng, T, 10)
        a = linear_bounds(T).quantile(rng.uniform(0.05, 0.95))
        assert abs(loglik_poly(a, 0.0, 1, T, x) - loglik_linear(a, T, x)) <= 1e-10 * max(1, abs(loglik_linear(a, T, x)))
        assert _rel(score_poly(a, 0.0, 1, T, x)[0], score_linear(a, T, x)) <= 1e-12


@given(poly_points())
@settings(max_examples=100, deadline=None)
def test_poly_loglik_matches_pmf(pt):
    a, c, T, x = pt
    f = poly_pmf_direct(a, c, 3, T)
    ref = loglik_from_pmf(f, x)
    assert abs(loglik_poly(a, c, 3, T, x) - ref) <= 1e-10 * max(1.0, abs(ref))


def test_poly_sign_guard():
    for s in ([1, 3, 5], [1, 3, 3, 5], [1, 3, 3, 7]):
        assert loglik_poly(1e-6, 5.0, 3, 10, s) == -math.inf
        assert loglik_poly(0.0, 5.0, 3, 10, s) == -math.inf


def test_poly_below_min_a_rejected():
    with pytest.raises(OutOfBounds):
        loglik_poly(2 * poly_min_a(3, 5.0, 10), 5.0, 3, 10, [1, 2])


@given(poly_points())
@settings(max_examples=100, deadline=None)
def test_poly_scores_finite_difference(pt):
    a, c, T, x = pt
    sa, sc = score_poly(a, c, 3, T, x)
    fa = central_diff(lambda v: loglik_poly(v, c, 3, T, x), a, 1e-6 * abs(a))
    hc = 1e-6 * max(1.0, abs(c))
    fc = central_diff(lambda v: loglik_poly(a, v, 3, T, x), c, hc)
    assert _rel(sa, fa) <= 1e-5
    assert abs(sc - fc) <= 1e-5 * max(abs(sc), abs(fc), 1e-3)


def test_poly_b_curvature_negative():
    rng = np.random.default_rng(4)
    for _ in range(50):
        T = int(rng.integers(5, 25))
        x = _sample(rng, T, 15)
        c = float(rng.uniform(x.min() - T, T - 1))
        D = (T - c) ** 3
        amin = poly_bounds(3, c, T).lo
        b = -rng.uniform(0.1, 0.9) * amin * D
        h = 1e-4 * b

        def l(bb):
            return loglik_poly(-bb / D, c, 3, T, x)

        assert l(b + h) - 2 * l(b) + l(b - h) < 0


# ---------------------------------------------------------------- polynomial MLE


def test_mle_poly_large_sample():
    t = POLY_TRUTH
    x = sample_inverse_cdf(poly_rho(t), 50000, seed=23).values
    fit = mle_poly(x, 3, 10)
    crlb = fisher_poly(t.a, t.c, 3, 10, 50000).crlb
    assert abs(fit.a_hat - t.a) <= 3 * math.sqrt(crlb[0])
    assert abs(fit.c_hat - t.c) <= 3 * math.sqrt(crlb[1])


def test_mle_poly_all_ones():
    fit = mle_poly([1] * 6, 3, 10)
    assert fit.degenerate and fit.T_hat == 1


@pytest.mark.parametrize(
    "sample",
    [(1, 3, 5), (1, 3, 3), (1, 3, 3, 5), (1, 3, 3, 7), (1, 3, 3, 3, 5), (1, 3, 3, 3, 9),
     (3,) + (1,) * 19, (3,) + (1,) * 4, (3, 3) + (1,) * 4, (3, 3, 3) + (1,) * 5],
)
def test_odd_valued_small_samples(sample):
    fit = mle_poly(sample, 3, 10)
    assert np.isfinite(fit.loglik) and fit.a_hat < 0
    assert fit.a_hat >= poly_bounds(3, fit.c_hat, 10).lo * (1 + 1e-12)


def test_mle_poly_beats_grid():
    rng = np.random.default_rng(5)
    for _ in range(10):
        T = int(rng.integers(6, 20))
        x = _sample(rng, T, 25)
        fit = mle_poly(x, 3, T)
        best = -math.inf
        for c in np.linspace(x.min() - T, T - 1, 40):
            for a in poly_bounds(3, c, T).grid(40):
                best = max(best, loglik_poly(a, c, 3, T, x))
        assert fit.loglik >= best - 1e-9 * abs(best)


def test_published_task1_cell():
    x = load_task("task1").values
    fit = mle_poly(x, 3, 294, shift=3)
    assert abs(fit.c_hat - 74.8998) <= 1.0
    assert abs(fit.a_hat / -9.1503e-8 - 1) <= 0.15


# ---------------------------------------------------------------- polynomial Fisher


def test_fisher_poly_structure():
    t = POLY_TRUTH
    F1 = fisher_poly(t.a, t.c, 3, 10, 1)
    assert np.allclose(F1.matrix, F1.matrix.T)
    assert np.all(np.linalg.eigvalsh(F1.matrix) > 0)
    F7 = fisher_poly(t.a, t.c, 3, 10, 7)
    assert np.allclose(F7.matrix, 7 * F1.matrix, rtol=1e-14)
    assert np.all(F1.crlb > 0)


def test_fisher_poly_monte_carlo_aa():
    t = POLY_TRUTH
    x = sample_inverse_cdf(poly_rho(t), 10**6, seed=31).values.astype(float)
    D = (t.T - t.c) ** 3
    g = D - (x - t.c) ** 3
    s = g / (1 + t.a * g) + (x - 1) / t.a
    assert _rel(np.mean(s * s), fisher_poly(t.a, t.c, 3, 10).matrix[0, 0]) < 0.01


def test_fisher_poly_singular():
    # n = 1 makes c unidentifiable: the c-score is a multiple of the a-score.
    with pytest.raises(SingularInformation):
        fisher_poly(-0.05, 0.0, 1, 10)


# ---------------------------------------------------------------- grid over T and shift


def test_grid_T_recovers_support():
    rho = linear_rho(LinearParams(-0.1, 10))
    for trial in range(3):
        x = sample_inverse_cdf(rho, 50000, seed=7, stream=(trial,)).values
        fit = mle_grid_T(x, "linear", T_margin=20)
        assert fit.T_hat == 10


def test_grid_dominance_and_table():
    rng = np.random.default_rng(8)
    x = _sample(rng, 12, 30) + 2
    fit = mle_grid_T(x, "poly", n=3, T_margin=6, shifts=[0, 1, 2])
    assert all(fit.loglik >= row[4] for row in fit.grid)
    assert fit.T_hat >= x.max() - fit.shift_hat
    lines = fit.grid_csv().splitlines()
    assert lines[0] == "shift,T,a,c,loglik" and len(lines) == 1 + 3 * 7
    d = json.loads(fit.to_json())
    assert d["searched_shifts"] == [0, 1, 2]


def test_grid_tie_break_prefers_small():
    fit = mle_grid_T([1, 1, 1], "linear", T_margin=5)
    assert fit.degenerate and fit.T_hat == 1 and fit.shift_hat == 0 and not fit.grid_edge


def test_grid_rejects_infeasible_shift():
    with pytest.raises(SupportViolation):
        mle_grid_T([3, 4, 5], "linear", shifts=[3])


def test_default_shift_range():
    assert default_shift_range([4, 10]) == [0, 1, 2, 3]
    assert default_shift_range([12, 40]) == [0, 9, 10, 11]
    assert default_shift_range([1, 5]) == [0]


def test_linear_task1_hits_grid_edge():
    x = load_task("task1").values
    fit = mle_grid_T(x, "linear", T_margin=200, shifts=[3])
    assert fit.grid_edge and fit.T_hat == 361


def test_grid_csv_round_trip():
    fit = mle_grid_T([2, 3, 5, 5, 7], "linear", T_margin=3)
    rows = [line.split(",") for line in fit.grid_csv().splitlines()[1:]]
    for r, g in zip(rows, fit.grid):
        assert float(r[2]) == g[2] and float(r[4]) == g[4]


def test_fit_result_pmf():
    fit = mle_linear([2, 3, 5], 6, shift=1)
    f = fit.pmf()
    assert f.shift == 1 and f.T == 6
    assert isinstance(fit, FitResult)


# ---------------------------------------------------------------- continuous-T derivative


@pytest.mark.parametrize("seed", range(5))
def test_dlogldT_linear(seed):
    rng = np.random.default_rng(seed)
    T = int(rng.integers(5, 20))
    x = _sample(rng, T, 12)
    a = linear_bounds(T).quantile(rng.uniform(0.2, 0.8))
    h = 1e-4
    fd = central_diff(lambda t: linear_loglik_lgamma(a, t, x), float(T), h)
    assert _rel(dlogldT_reference(LinearParams(a, T), x, "a"), fd) <= 1e-4
    b = -a * T
    fd_b = central_diff(lambda t: linear_loglik_lgamma(-b / t, t, x), float(T), h)
    assert _rel(dlogldT_reference(LinearParams(a, T), x, "b"), fd_b) <= 1e-4


@pytest.mark.parametrize("seed", range(5))
def test_dlogldT_poly(seed):
    rng = np.random.default_rng(seed)
    T = int(rng.integers(6, 20))
    x = _sample(rng, T, 12)
    c = float(rng.uniform(x.min() - T, T - 1))
    a = rng.uniform(0.2, 0.8) * poly_bounds(3, c, T).lo
    p = PolyParams(a, c, 3, T)
    h = 1e-4
    fd = central_diff(lambda t: poly_loglik_realT(a, c, 3, t, x), float(T), h)
    assert _rel(dlogldT_reference(p, x, "a"), fd) <= 1e-4
    b = p.b
    fd_b = central_diff(lambda t: poly_loglik_realT(-b / (t - c) ** 3, c, 3, t, x), float(T), h)
    assert _rel(dlogldT_reference(p, x, "b"), fd_b) <= 1e-4


def test_dlogldT_all_ones():
    a, T = -0.05, 12
    assert math.isclose(dlogldT_reference(LinearParams(a, T), [1] * 4), 4 * a / (1 + a * (T - 1)), rel_tol=1e-14)


def test_dlogldT_sign_change_across_true_T():
    x = sample_inverse_cdf(linear_rho(LinearParams(-0.1, 10)), 50000, seed=3).values
    below = dlogldT_reference(LinearParams(-0.1, 9.5), x)
    above = dlogldT_reference(LinearParams(-0.1, 10.5), x)
    assert below * above < 0
