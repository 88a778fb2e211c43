"""Stein equation for the smoothed indicator h_{z,λ}.

For ``h`` piecewise linear every Gaussian integral reduces to Φ and φ, so
the bounded solution

    f(x) = e^{x²/2} ∫_{-∞}^x (h(t) - Nh) e^{-t²/2} dt

is available in closed form. To avoid forming e^{x²/2}, the lower-tail
representation is used for ``x <= 0`` and the equivalent upper-tail one
for ``x > 0``; both are written as Mills ratios times bounded factors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfcx, ndtr

_SQRT_HALF_PI = math.sqrt(math.pi / 2)
_INV_SQRT_2PI = 1 / math.sqrt(2 * math.pi)


def _phi(x):
    return _INV_SQRT_2PI * np.exp(-0.5 * np.square(x))


def mills(x):
    """(1 - Φ(x)) / φ(x), stable for all real x."""
    return _SQRT_HALF_PI * erfcx(np.asarray(x, dtype=float) / math.sqrt(2))


@dataclass(frozen=True)
class SmoothedIndicator:
    z: float
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"smoothing width must be positive, got {self.lam}")

    def __call__(self, x):
        return h_eval(self, x)


def h_eval(ind: SmoothedIndicator, x):
    """1 up to z, linear down to 0 on (z, z+λ], 0 beyond."""
    out = np.clip(1 + (ind.z - np.asarray(x, dtype=float)) / ind.lam, 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def _int_cdf(a):
    # ∫_{-∞}^a Φ = aΦ(a) + φ(a)
    return a * ndtr(a) + _phi(a)


def normal_expectation(ind: SmoothedIndicator) -> float:
    """E h_{z,λ}(Z) = (1/λ) ∫_z^{z+λ} Φ(s) ds."""
    z, lam = ind.z, ind.lam
    if lam < 1e-6:
        # the difference quotient loses digits; Taylor in λ is exact to O(λ²)
        return float(ndtr(z) + 0.5 * lam * _phi(z))
    return float((_int_cdf(z + lam) - _int_cdf(z)) / lam)


@dataclass(frozen=True)
class SteinSolution:
    indicator: SmoothedIndicator
    nh: float

    @classmethod
    def for_indicator(cls, ind: SmoothedIndicator) -> SteinSolution:
        return cls(ind, normal_expectation(ind))

    def __call__(self, x):
        return stein_solve(self, x)


def _lower_antideriv(a, x):
    # (aΦ(a) + φ(a)) / φ(x), for a <= x <= 0
    return np.exp(0.5 * (x * x - a * a)) * (1 + a * mills(-a))


def _upper_antideriv(a, x):
    # (φ(a) - a(1-Φ(a))) / φ(x), for 0 < x <= a
    return np.exp(0.5 * (x * x - a * a)) * (1 - a * mills(a))


def _f_values(sol: SteinSolution, x: np.ndarray) -> np.ndarray:
    z, lam, nh = sol.indicator.z, sol.indicator.lam, sol.nh
    top = z + lam
    slope = 1 + z / lam
    f = np.empty_like(x)
    below = x <= z
    above = x > top
    inside = ~below & ~above
    neg = x <= 0

    # lower-tail form f = (∫_{-∞}^x hφ - Nh Φ(x)) / φ(x) for x <= 0
    sel = below & neg
    f[sel] = (1 - nh) * mills(-x[sel])
    sel = inside & neg
    xs = x[sel]
    rz = np.exp(0.5 * (xs * xs - z * z))
    f[sel] = mills(-z) * rz + slope * (mills(-xs) - mills(-z) * rz) + (1 - rz) / lam - nh * mills(-xs)
    sel = above & neg
    xs = x[sel]
    f[sel] = ndtr(-xs) * (_lower_antideriv(top, xs) - _lower_antideriv(z, xs)) / lam

    # upper-tail form f = (Nh (1-Φ(x)) - ∫_x^∞ hφ) / φ(x) for x > 0
    sel = below & ~neg
    xs = x[sel]
    f[sel] = ndtr(xs) * (_upper_antideriv(z, xs) - _upper_antideriv(top, xs)) / lam
    sel = inside & ~neg
    xs = x[sel]
    rt = np.exp(0.5 * (xs * xs - top * top))
    f[sel] = nh * mills(xs) - slope * (mills(xs) - mills(top) * rt) - (rt - 1) / lam
    sel = above & ~neg
    f[sel] = nh * mills(x[sel])
    return f


def stein_solve(sol: SteinSolution, x):
    """Return ``(f(x), f'(x))`` for the bounded Stein solution.

    ``f'`` comes from the equation itself, ``f'(x) = x f(x) + h(x) - Nh``.
    """
    arr = np.asarray(x, dtype=float)
    flat = np.atleast_1d(arr)
    f = _f_values(sol, flat)
    fp = flat * f + h_eval(sol.indicator, flat) - sol.nh
    if arr.ndim == 0:
        return float(f[0]), float(fp[0])
    return f.reshape(arr.shape), fp.reshape(arr.shape)


def overlap_fraction(x, t, z, lam):
    """∫_0^1 1_{[z, z+λ]}(x + u t) du: the share of the segment from x to
    x+t lying in [z, z+λ]."""
    x, t = np.asarray(x, dtype=float), np.asarray(t, dtype=float)
    lo = np.minimum(x, x + t)
    hi = np.maximum(x, x + t)
    inside = np.clip(np.minimum(hi, z + lam) - np.maximum(lo, z), 0.0, None)
    return inside / np.abs(t)


def smoothness_gap(sol: SteinSolution, x, t):
    """``(lhs, rhs)`` of |f'(x) - f'(x+t)| <= |t|(1 + |x| + overlap/λ)."""
    x, t = np.asarray(x, dtype=float), np.asarray(t, dtype=float)
    if np.any(t == 0):
        raise ValueError("t must be nonzero")
    _, fx = stein_solve(sol, x)
    _, fxt = stein_solve(sol, x + t)
    ind = sol.indicator
    lhs = np.abs(fx - fxt)
    rhs = np.abs(t) * (1 + np.abs(x) + overlap_fraction(x, t, ind.z, ind.lam) / ind.lam)
    return lhs, rhs


def smoothness_bound_check(sol: SteinSolution, x, t, slack: float = 1e-9) -> bool:
    lhs, rhs = smoothness_gap(sol, x, t)
    return bool(np.all(lhs <= rhs + slack))


def bound_maxima(sol: SteinSolution, grid) -> dict:
    """Largest |f|, |x f| and |f'| over ``grid``."""
    grid = np.asarray(grid, dtype=float)
    f, fp = stein_solve(sol, grid)
    return {
        "f": float(np.max(np.abs(f))),
        "xf": float(np.max(np.abs(grid * f))),
        "fprime": float(np.max(np.abs(fp))),
    }
