"""Closed-form moments of the degree-d count Y_n.

Binomial and Poisson probabilities are evaluated in log space so that
``n`` in the tens of thousands does not overflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from degstein.er_graph import ModelParams
from degstein.errors import DomainError

# Theta_n is open at 0; delta_theta is not evaluated below this.
THETA_FLOOR = 1e-6
STIRLING_MAX = 30


@dataclass(frozen=True)
class MomentSet:
    tau_n: float
    tau: float
    mu: float
    sigma2: float
    delta_n: float
    delta: float
    r: float
    psi: float | None

    @property
    def sigma(self) -> float:
        return math.sqrt(self.sigma2)


def _check_theta(theta, n=None):
    if not theta > 0:
        raise DomainError(f"theta must be positive, got {theta}")
    if n is not None and not theta < n - 1:
        raise DomainError(f"theta={theta} outside Theta_n: need theta < n-1 = {n - 1}")


def log_binom_pmf(k: int, trials: int, p: float) -> float:
    return (
        math.lgamma(trials + 1)
        - math.lgamma(k + 1)
        - math.lgamma(trials - k + 1)
        + k * math.log(p)
        + (trials - k) * math.log1p(-p)
    )


def tau_n_theta(params: ModelParams) -> float:
    """P(Bin(n-1, θ/(n-1)) = d): the chance a given vertex has degree d."""
    _check_theta(float(params.theta), params.n)
    return math.exp(log_binom_pmf(params.d, params.n - 1, float(params.p)))


def tau_theta(theta: float, d: int) -> float:
    """Poisson(θ) probability of the value d."""
    _check_theta(theta)
    if d < 0:
        raise DomainError(f"d must be nonnegative, got {d}")
    return math.exp(-theta + d * math.log(theta) - math.lgamma(d + 1))


def delta_n_theta(params: ModelParams, tau_n: float | None = None) -> float:
    theta, n, d = float(params.theta), params.n, params.d
    if tau_n is None:
        tau_n = tau_n_theta(params)
    return tau_n * ((d - theta) ** 2 / (theta * (1 - theta / (n - 1))) - 1) + 1


def delta_theta(theta: float, d: int) -> float:
    if theta < THETA_FLOOR:
        raise DomainError(f"theta={theta} below evaluation floor {THETA_FLOOR}")
    return tau_theta(theta, d) * ((d - theta) ** 2 / theta - 1) + 1


def rate(n: int, theta: float, d: int) -> float:
    """r_{n,θ} = sqrt(n τ_θ)."""
    return math.sqrt(n * tau_theta(theta, d))


def reduced_theta(params: ModelParams) -> float | None:
    """ψ = θ(n-2)/(n-1), the parameter of the graph with one vertex removed.

    ``None`` when ``n = d + 1`` since the reduced graph is then too small
    to carry a degree-d vertex count.
    """
    if params.n < params.d + 2:
        return None
    return (params.n - 2) / (params.n - 1) * float(params.theta)


def moment_set(params: ModelParams) -> MomentSet:
    n, d, theta = params.n, params.d, float(params.theta)
    tau_n = tau_n_theta(params)
    tau = tau_theta(theta, d)
    delta_n = delta_n_theta(params, tau_n)
    return MomentSet(
        tau_n=tau_n,
        tau=tau,
        mu=n * tau_n,
        sigma2=n * tau_n * delta_n,
        delta_n=delta_n,
        delta=delta_theta(theta, d),
        r=math.sqrt(n * tau),
        psi=reduced_theta(params),
    )


@lru_cache(maxsize=None)
def _stirling(m: int, j: int) -> int:
    if m == j:
        return 1
    if j == 0 or j > m:
        return 0
    return j * _stirling(m - 1, j) + _stirling(m - 1, j - 1)


def stirling_second(m: int, j: int) -> int:
    """Number of partitions of an m-set into j nonempty blocks."""
    if not 1 <= j <= m <= STIRLING_MAX:
        raise DomainError(f"need 1 <= j <= m <= {STIRLING_MAX}, got m={m}, j={j}")
    return _stirling(m, j)


def falling_factorial(x: int, j: int) -> int:
    out = 1
    for i in range(j):
        out *= x - i
    return out


def binomial_raw_moment(trials: int, p: float, m: int) -> float:
    """E D^m for D ~ Bin(trials, p), via Stirling numbers and falling factorials."""
    if not 0 <= m <= STIRLING_MAX:
        raise DomainError(f"moment order must lie in [0, {STIRLING_MAX}], got {m}")
    if trials < 0 or not 0 <= p <= 1:
        raise DomainError(f"invalid binomial parameters trials={trials}, p={p}")
    if m == 0:
        return 1.0
    terms = [stirling_second(m, j) * falling_factorial(trials, j) * p**j for j in range(1, m + 1)]
    # a Fraction p stays exact
    return sum(terms) if isinstance(p, Fraction) else math.fsum(terms)


def psi_squared_envelope(params: ModelParams) -> float:
    """Shape of the O(1/n) bound on Ψ², with its unnamed constant set to 1.

    Only meaningful for scaling comparisons, not as a certified bound.
    """
    t, d = float(params.theta), params.d
    return (24 * t + 48 * t**2 + 144 * t**3 + 48 * d**2 + 144 * t * d**2 + 12) / params.n
