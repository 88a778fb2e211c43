import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import norm

from degstein.stein_kernel import (
    SmoothedIndicator,
    SteinSolution,
    bound_maxima,
    h_eval,
    mills,
    normal_expectation,
    overlap_fraction,
    smoothness_bound_check,
    smoothness_gap,
    stein_solve,
)

PAIRS = [(z, lam) for z in (-2.0, 0.0, 2.0) for lam in (0.1, 1.0)]


def _sol(z, lam):
    return SteinSolution.for_indicator(SmoothedIndicator(z, lam))


def _f_by_quadrature(sol, x):
    ind = sol.indicator
    g = lambda t: (h_eval(ind, t) - sol.nh) * norm.pdf(t)  # noqa: E731
    pts = [p for p in (ind.z, ind.z + ind.lam) if p < x]
    val = quad(g, -np.inf, x, points=None, epsabs=1e-14, limit=200)[0] if not pts else (
        quad(g, -np.inf, pts[0], epsabs=1e-14)[0] + quad(g, pts[0], x, points=pts[1:] or None, epsabs=1e-14)[0]
    )
    return val / norm.pdf(x)


def _richardson(fun, x, h=1e-3):
    d = lambda s: (fun(x + s) - fun(x - s)) / (2 * s)  # noqa: E731
    return (4 * d(h / 2) - d(h)) / 3


def test_h_values():
    ind = SmoothedIndicator(0.3, 2.0)
    assert h_eval(ind, -5.0) == 1.0
    assert h_eval(ind, 0.3) == 1.0
    assert h_eval(ind, 1.3) == pytest.approx(0.5)
    assert h_eval(ind, 2.3) == pytest.approx(0.0)
    assert h_eval(ind, 9.0) == 0.0
    assert ind(np.array([-1.0, 9.0])).tolist() == [1.0, 0.0]
    with pytest.raises(ValueError):
        SmoothedIndicator(0.0, 0.0)


def test_normal_expectation_examples():
    # the printed 0.6843740 is the closed form below rounded a little off
    assert normal_expectation(SmoothedIndicator(0.0, 1.0)) == pytest.approx(0.6843740, abs=1e-6)
    exact = norm.cdf(1) - norm.pdf(0) + norm.pdf(1)
    assert normal_expectation(SmoothedIndicator(0.0, 1.0)) == pytest.approx(exact, abs=1e-15)
    for z in (-1.5, 0.0, 0.8):
        assert normal_expectation(SmoothedIndicator(z, 1e-8)) == pytest.approx(norm.cdf(z), abs=1e-6)
    assert normal_expectation(SmoothedIndicator(-40.0, 1.0)) <= 1e-15


@pytest.mark.parametrize("lam", [0.1, 0.5, 1.0, 3.0])
def test_symmetric_indicator_has_half_mass(lam):
    assert normal_expectation(SmoothedIndicator(-lam / 2, lam)) == pytest.approx(0.5, abs=1e-10)


@pytest.mark.parametrize("z,lam", PAIRS + [(0.7, 2.5)])
def test_normal_expectation_vs_quadrature(z, lam):
    ind = SmoothedIndicator(z, lam)
    val = quad(lambda t: h_eval(ind, t) * norm.pdf(t), -np.inf, z)[0] + quad(
        lambda t: h_eval(ind, t) * norm.pdf(t), z, z + lam
    )[0]
    assert normal_expectation(ind) == pytest.approx(val, abs=1e-10)


def test_mills_is_stable():
    assert mills(0.0) == pytest.approx(math.sqrt(math.pi / 2))
    assert mills(50.0) == pytest.approx(1 / 50 * (1 - 1 / 2500 + 3 / 50**4), rel=1e-9)
    assert np.isfinite(mills(-30.0))


@pytest.mark.parametrize("z,lam", PAIRS)
def test_solution_matches_quadrature(z, lam):
    sol = _sol(z, lam)
    for x in np.linspace(-5, 5, 23):
        f, _ = stein_solve(sol, float(x))
        assert f == pytest.approx(_f_by_quadrature(sol, float(x)), abs=1e-9)


def test_residual_by_numeric_differentiation():
    sol = _sol(0.0, 1.0)
    f = lambda x: stein_solve(sol, x)[0]  # noqa: E731
    for x in (-3.0, 0.37, 2.0):
        fx, fp = stein_solve(sol, x)
        numeric = _richardson(f, x)
        assert abs(numeric - x * fx - (h_eval(sol.indicator, x) - sol.nh)) <= 1e-8
        assert abs(fp - numeric) <= 1e-8


@pytest.mark.parametrize("z,lam", PAIRS)
def test_bounds_on_grid(z, lam):
    grid = np.round(np.arange(-10_000, 10_001) * 1e-3, 12)
    m = bound_maxima(_sol(z, lam), grid)
    assert m["f"] <= 1 + 1e-6
    assert m["xf"] <= 1 + 1e-6
    assert m["fprime"] <= 1 + 1e-4


def test_decay_in_the_tails():
    # the bounded solution tends to 0 like 1/|x|; x f(x) has finite limits
    for z, lam in PAIRS:
        sol = _sol(z, lam)
        x = np.array([12.0, 20.0, 50.0, 1e4])
        f_hi, _ = stein_solve(sol, x)
        f_lo, _ = stein_solve(sol, -x)
        assert np.all(np.abs(f_hi) <= 1 / x) and np.all(np.abs(f_lo) <= 1 / x)
        assert 1e4 * f_hi[-1] == pytest.approx(sol.nh, abs=1e-6)
        assert -1e4 * f_lo[-1] == pytest.approx(-(1 - sol.nh), abs=1e-6)


def test_extreme_thresholds_stay_finite():
    for z in (-40.0, 40.0):
        sol = _sol(z, 1.0)
        f, fp = stein_solve(sol, np.linspace(-60, 60, 1201))
        assert np.all(np.isfinite(f)) and np.all(np.isfinite(fp))
        assert np.max(np.abs(f)) <= 1 + 1e-6


def test_vector_and_scalar_agree():
    sol = _sol(0.5, 0.3)
    xs = np.array([-2.0, 0.0, 0.6, 4.0])
    f, fp = stein_solve(sol, xs)
    for i, x in enumerate(xs):
        assert stein_solve(sol, float(x)) == (pytest.approx(f[i]), pytest.approx(fp[i]))
    assert sol(1.0) == stein_solve(sol, 1.0)


def test_overlap_fraction():
    assert overlap_fraction(-0.5, 1.0, 0.0, 1.0) == pytest.approx(0.5)
    assert overlap_fraction(0.5, -1.0, 0.0, 1.0) == pytest.approx(0.5)
    assert overlap_fraction(-3.0, 1.0, 0.0, 1.0) == 0.0
    assert overlap_fraction(0.2, 0.3, 0.0, 1.0) == pytest.approx(1.0)
    rng = np.random.default_rng(0)
    for _ in range(50):
        x, t = rng.normal(size=2) * 2
        u = (np.arange(200_000) + 0.5) / 200_000
        direct = np.mean((x + u * t >= -0.3) & (x + u * t <= 0.9))
        assert overlap_fraction(x, t, -0.3, 1.2) == pytest.approx(direct, abs=1e-4)


def test_smoothness_examples():
    sol = _sol(0.0, 1.0)
    assert smoothness_bound_check(sol, -8.0, 0.5)
    lhs, rhs = smoothness_gap(sol, -8.0, 0.5)
    assert lhs < 0.5 <= rhs
    assert smoothness_bound_check(sol, -0.5, 1.0)
    with pytest.raises(ValueError):
        smoothness_gap(sol, 0.0, 0.0)


@pytest.mark.parametrize("z,lam", PAIRS)
def test_smoothness_randomised(z, lam):
    rng = np.random.default_rng(PAIRS.index((z, lam)))
    x = rng.uniform(-6, 6, 10_000)
    t = rng.normal(scale=1.5, size=10_000)
    t[t == 0] = 1e-3
    assert smoothness_bound_check(_sol(z, lam), x, t)
