import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import binom, poisson

from degstein.er_graph import ModelParams
from degstein.errors import DomainError
from degstein.moments import (
    binomial_raw_moment,
    delta_theta,
    falling_factorial,
    moment_set,
    psi_squared_envelope,
    stirling_second,
    tau_n_theta,
    tau_theta,
)
from degstein.oracle import enumerate_count_law


def _pair_variance(n, theta, d):
    # Var Y from the pair decomposition: both endpoints of a pair at degree d
    p = theta / (n - 1)
    tau = binom.pmf(d, n - 1, p)
    both = p * binom.pmf(d - 1, n - 2, p) ** 2 + (1 - p) * binom.pmf(d, n - 2, p) ** 2
    return n * tau * (1 - tau) + n * (n - 1) * (both - tau**2)


@pytest.mark.parametrize(
    "n,theta,d,expected",
    [(3, 1.0, 1, 0.5), (2, 0.5, 1, 0.5), (4, 1.5, 1, 0.375)],
)
def test_tau_n_examples(n, theta, d, expected):
    assert tau_n_theta(ModelParams(n, d, theta)) == pytest.approx(expected, abs=1e-15)


def test_tau_theta_examples():
    assert tau_theta(1.0, 1) == pytest.approx(0.3678794, abs=1e-7)
    assert tau_theta(2.0, 2) == pytest.approx(0.2706706, abs=1e-7)
    assert math.fsum(tau_theta(2.5, d) for d in range(80)) == pytest.approx(1.0, abs=1e-14)
    with pytest.raises(DomainError):
        tau_theta(0.0, 1)


def test_tau_n_large_n_log_space():
    params = ModelParams(10_000, 2, 3.0)
    assert tau_n_theta(params) == pytest.approx(binom.pmf(2, 9999, 3 / 9999), rel=1e-12)


def test_moment_set_examples():
    ms = moment_set(ModelParams(3, 1, 1.0))
    assert ms.mu == pytest.approx(1.5, abs=1e-14)
    assert ms.sigma2 == pytest.approx(0.75, abs=1e-14)
    ms = moment_set(ModelParams(2, 1, 0.5))
    assert ms.mu == pytest.approx(1.0, abs=1e-14)
    assert ms.sigma2 == pytest.approx(1.0, abs=1e-14)
    assert ms.psi is None
    assert moment_set(ModelParams(50, 1, 1.0)).delta == pytest.approx(1 - math.exp(-1), abs=1e-7)
    assert moment_set(ModelParams(100, 1, 1.0)).r == pytest.approx(6.0653066, abs=1e-7)
    assert moment_set(ModelParams(10, 1, 2.0)).psi == pytest.approx(1.7777778, abs=1e-7)


@pytest.mark.parametrize("n", [3, 4, 5, 6])
@pytest.mark.parametrize("d", [1, 2])
@pytest.mark.parametrize("theta", [0.3, 0.5, 1.0, 1.5])
def test_moments_match_enumeration(n, d, theta):
    if n < d + 1 or not theta < n - 1:
        pytest.skip("outside the parameter space")
    params = ModelParams(n, d, theta)
    ms = moment_set(params)
    law = enumerate_count_law(params)
    assert abs(ms.mu - law.mean()) <= 1e-10
    assert abs(ms.sigma2 - law.var()) <= 1e-10


@pytest.mark.parametrize("n,theta,d", [(200, 1.0, 1), (1000, 2.5, 2), (5000, 0.7, 3)])
def test_variance_matches_pair_decomposition(n, theta, d):
    ms = moment_set(ModelParams(n, d, theta))
    assert ms.sigma2 == pytest.approx(_pair_variance(n, theta, d), rel=1e-9)


def test_stirling():
    assert all(stirling_second(m, 1) == 1 for m in range(1, 31))
    assert stirling_second(3, 2) == 3
    assert stirling_second(4, 3) == 6
    assert stirling_second(30, 30) == 1
    # Bell number B_10 as a row sum
    assert sum(stirling_second(10, j) for j in range(1, 11)) == 115975
    for bad in [(0, 0), (3, 4), (31, 2), (5, 0)]:
        with pytest.raises(DomainError):
            stirling_second(*bad)


def test_falling_factorial():
    assert falling_factorial(5, 3) == 60
    assert falling_factorial(2, 3) == 0
    assert falling_factorial(7, 0) == 1


def test_binomial_raw_moment_examples():
    assert binomial_raw_moment(2, 0.5, 2) == pytest.approx(1.5, abs=1e-15)
    assert binomial_raw_moment(3, 1 / 3, 3) == pytest.approx(29 / 9, abs=1e-14)
    assert binomial_raw_moment(17, 0.3, 1) == pytest.approx(17 * 0.3, abs=1e-14)
    # with a Fraction p the result is exact
    assert binomial_raw_moment(3, Fraction(1, 3), 3) == Fraction(29, 9)


@pytest.mark.parametrize("trials", [1, 5, 20, 50])
@pytest.mark.parametrize("p", [0.01, 0.3, 0.77])
def test_binomial_raw_moment_vs_pmf(trials, p):
    k = np.arange(trials + 1)
    pmf = binom.pmf(k, trials, p)
    for m in range(1, 7):
        direct = math.fsum(pmf * k.astype(float) ** m)
        assert binomial_raw_moment(trials, p, m) == pytest.approx(direct, rel=1e-10)


def test_envelope():
    assert psi_squared_envelope(ModelParams(100, 1, 1.0)) == pytest.approx(4.20, abs=1e-12)
    a = psi_squared_envelope(ModelParams(100, 2, 1.7))
    b = psi_squared_envelope(ModelParams(400, 2, 1.7))
    assert b == pytest.approx(a / 4, rel=1e-14)
    vals = [psi_squared_envelope(ModelParams(100, 2, t)) for t in np.linspace(0.01, 10, 300)]
    assert np.all(np.diff(vals) >= 0)


@pytest.mark.parametrize("d", [1, 2])
def test_delta_theta_bounded_away_from_zero(d):
    grid = np.arange(1, 3001) * 1e-3
    vals = [delta_theta(float(t), d) for t in grid]
    assert min(vals) > 0.25
    assert max(vals) < 10


def test_delta_theta_floor():
    with pytest.raises(DomainError):
        delta_theta(1e-7, 1)
    # d = 1 has the finite limit 1 + 1 - 0 at the origin
    assert delta_theta(1e-6, 1) == pytest.approx(2.0, abs=1e-5)


def test_delta_theta_is_poisson_variance_factor():
    # n τ δ is the variance of the count in the Poisson limit; compare at moderate n
    for theta, d in [(0.5, 1), (2.0, 2), (3.0, 1)]:
        ms = moment_set(ModelParams(100_000, d, theta))
        assert ms.delta_n == pytest.approx(ms.delta, rel=1e-3)
        assert ms.tau == pytest.approx(poisson.pmf(d, theta), rel=1e-12)


@settings(max_examples=200, deadline=None)
@given(n=st.integers(3, 5000), d=st.integers(1, 5), frac=st.floats(0.001, 0.999))
def test_moment_invariants(n, d, frac):
    if n < d + 2:
        return
    theta = frac * min(n - 1, 10.0)
    ms = moment_set(ModelParams(n, d, theta))
    assert 0 < ms.tau_n < 1 and 0 < ms.tau < 1
    assert ms.mu > 0 and ms.sigma2 > 0
    assert ms.mu == pytest.approx(n * ms.tau_n, rel=1e-14)
    assert ms.r**2 == pytest.approx(n * ms.tau, rel=1e-12)
    assert 0 < ms.psi < theta
    assert ms.psi < n - 2
