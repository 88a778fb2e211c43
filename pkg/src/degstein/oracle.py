"""Exact laws by brute-force enumeration of all labelled graphs on few vertices.

Graphs are bitmasks over the linearised pairs (see :mod:`degstein.er_graph`).
Every law is first tabulated combinatorially, as exact rational weights
attached to an edge count ``e``, and only then evaluated at an edge
probability ``p`` via ``p**e * (1-p)**(N-e)``. With a rational ``p`` the
result is exact; otherwise terms are accumulated with ``math.fsum``.
"""

from __future__ import annotations

import itertools
import json
import math
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.special import ndtr, ndtri

from degstein.er_graph import ModelParams
from degstein.errors import DomainError, EnumerationCapError

MARGINAL_CAP = 7
JOINT_CAP = 5
PROB_TOL = 1e-12


@dataclass(frozen=True)
class ExactDist:
    """Finite pmf; ``probs`` are floats or :class:`~fractions.Fraction`."""

    support: tuple
    probs: tuple

    def __post_init__(self):
        if len(self.support) != len(self.probs):
            raise DomainError("support and probs differ in length")
        if any(b <= a for a, b in zip(self.support, self.support[1:])):
            raise DomainError("support must be strictly increasing")
        if any(q < 0 for q in self.probs):
            raise DomainError("negative probability")
        total = math.fsum(float(q) for q in self.probs)
        if abs(total - 1) > PROB_TOL:
            raise DomainError(f"probabilities sum to {total!r}, not 1")

    @classmethod
    def from_mapping(cls, pmf, drop_zero=True) -> ExactDist:
        items = sorted((k, q) for k, q in pmf.items() if not (drop_zero and q == 0))
        return cls(tuple(k for k, _ in items), tuple(q for _, q in items))

    @property
    def exact(self) -> bool:
        return all(isinstance(q, (Fraction, int)) for q in self.probs)

    def pmf(self) -> dict:
        return dict(zip(self.support, self.probs))

    def mean(self):
        if self.exact:
            return sum(q * x for x, q in zip(self.support, self.probs))
        return math.fsum(q * x for x, q in zip(self.support, self.probs))

    def var(self):
        m = self.mean()
        if self.exact:
            return sum(q * (x - m) ** 2 for x, q in zip(self.support, self.probs))
        return math.fsum(q * (x - m) ** 2 for x, q in zip(self.support, self.probs))

    def to_json(self) -> dict:
        enc = (lambda q: f"{q.numerator}/{q.denominator}") if self.exact else float
        return {str(x): enc(q) for x, q in zip(self.support, self.probs)}

    @classmethod
    def from_json(cls, obj) -> ExactDist:
        dec = lambda q: Fraction(q) if isinstance(q, str) else float(q)  # noqa: E731
        return cls.from_mapping({int(k): dec(q) for k, q in obj.items()}, drop_zero=False)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def _edge_probability(params: ModelParams, exact: bool):
    if not exact:
        return float(params.p)
    theta = params.theta if isinstance(params.theta, Fraction) else Fraction(str(params.theta))
    return theta / (params.n - 1)


def _evaluate(coeffs: dict, p, pairs: int):
    """Sum of ``c * p**e * (1-p)**(pairs-e)`` over ``coeffs = {e: c}``."""
    if isinstance(p, Fraction):
        return sum(Fraction(c) * p**e * (1 - p) ** (pairs - e) for e, c in coeffs.items())
    return math.fsum(float(c) * p**e * (1 - p) ** (pairs - e) for e, c in coeffs.items())


def _pairs(n: int):
    return [(u, v) for v in range(n) for u in range(v)]


def count_table(n: int, d: int) -> np.ndarray:
    """``table[y, e]`` = number of graphs on ``n`` vertices with ``e`` edges
    and exactly ``y`` vertices of degree ``d``."""
    if n > MARGINAL_CAP:
        raise EnumerationCapError(f"n={n} exceeds enumeration cap {MARGINAL_CAP}")
    pairs = _pairs(n)
    masks = np.arange(1 << len(pairs), dtype=np.uint32)
    deg = np.zeros((len(masks), n), dtype=np.uint8)
    edges = np.zeros(len(masks), dtype=np.int64)
    for k, (u, v) in enumerate(pairs):
        bit = ((masks >> k) & 1).astype(np.uint8)
        deg[:, u] += bit
        deg[:, v] += bit
        edges += bit
    y = np.count_nonzero(deg == d, axis=1)
    flat = np.bincount(y * (len(pairs) + 1) + edges, minlength=(n + 1) * (len(pairs) + 1))
    return flat.reshape(n + 1, len(pairs) + 1)


def enumerate_count_law(params: ModelParams, exact: bool = False) -> ExactDist:
    """Exact law of the number of degree-d vertices."""
    table = count_table(params.n, params.d)
    p = _edge_probability(params, exact)
    pairs = params.pairs
    pmf = {}
    for y in range(table.shape[0]):
        coeffs = {e: int(c) for e, c in enumerate(table[y]) if c}
        if coeffs:
            pmf[y] = _evaluate(coeffs, p, pairs)
    return ExactDist.from_mapping(pmf)


def graph_law(n: int, p) -> dict:
    """Product law of G(n, p): bitmask -> probability."""
    pairs = n * (n - 1) // 2
    return {m: p ** m.bit_count() * (1 - p) ** (pairs - m.bit_count()) for m in range(1 << pairs)}


def size_bias_transform(dist: ExactDist) -> ExactDist:
    """Law proportional to ``y * P(Y = y)``."""
    mu = dist.mean()
    if not mu > 0:
        raise DomainError("size biasing needs a positive mean")
    return ExactDist.from_mapping({y: y * q / mu for y, q in dist.pmf().items()})


JOINT_FIELDS = ("y", "y_s", "deg_chosen", "v_reduced", "chosen", "reduced_mask")


@dataclass(frozen=True)
class JointLaw:
    """Exact joint law of the coupling outcome.

    Keys of ``atoms`` are tuples ordered as :data:`JOINT_FIELDS`; the
    reduced graph is a bitmask over pairs of the ``n - 1`` remaining vertices.
    """

    n: int
    d: int
    atoms: dict

    def marginal(self, *names) -> dict:
        idx = [JOINT_FIELDS.index(x) for x in names]
        out = defaultdict(int)
        for key, q in self.atoms.items():
            out[tuple(key[i] for i in idx)] += q
        return dict(out)

    def law(self, name) -> ExactDist:
        return ExactDist.from_mapping({k[0]: q for k, q in self.marginal(name).items()})

    def conditional(self, target: str, given: tuple[str, ...]) -> dict:
        """``{given values: {target value: conditional probability}}``."""
        joint = self.marginal(*given, target)
        norm = defaultdict(int)
        for key, q in joint.items():
            norm[key[:-1]] += q
        out = defaultdict(dict)
        for key, q in joint.items():
            if norm[key[:-1]]:
                out[key[:-1]][key[-1]] = q / norm[key[:-1]]
        return dict(out)


def _degrees(mask: int, pairs) -> list[int]:
    deg = [0] * (pairs[-1][1] + 1 if pairs else 1)
    for k, (u, v) in enumerate(pairs):
        if mask >> k & 1:
            deg[u] += 1
            deg[v] += 1
    return deg


@lru_cache(maxsize=None)
def coupling_table(n: int, d: int) -> dict:
    """Outcome key -> ``{edge count of G: exact weight}``; weights include the
    1/n choice of vertex and the uniform subset probability. Cached; do not
    mutate the result."""
    if n > JOINT_CAP:
        raise EnumerationCapError(f"n={n} exceeds joint enumeration cap {JOINT_CAP}")
    pairs = _pairs(n)
    index = {pr: k for k, pr in enumerate(pairs)}
    reduced_index = {pr: k for k, pr in enumerate(_pairs(n - 1))}
    table = defaultdict(lambda: defaultdict(Fraction))
    for mask in range(1 << len(pairs)):
        e = mask.bit_count()
        deg = _degrees(mask, pairs) if n > 1 else [0]
        y = sum(1 for x in deg if x == d)
        for i in range(n):
            nbrs = [w for w in range(n) if w != i and mask >> index[(min(i, w), max(i, w))] & 1]
            others = [w for w in range(n) if w != i and w not in nbrs]
            # reduced graph
            red_mask = 0
            red_deg = [0] * (n - 1)
            for (u, v), k in index.items():
                if u != i and v != i and mask >> k & 1:
                    a, b = u - (u > i), v - (v > i)
                    red_mask |= 1 << reduced_index[(a, b)]
                    red_deg[a] += 1
                    red_deg[b] += 1
            v_red = sum(1 for x in red_deg if x == d)
            di = deg[i]
            if di > d:
                choices = list(itertools.combinations(nbrs, di - d))
                delta = -1
            elif di < d:
                choices = list(itertools.combinations(others, d - di))
                delta = 1
            else:
                choices = [()]
                delta = 0
            w = Fraction(1, n * len(choices))
            for sub in choices:
                new = list(deg)
                new[i] = d
                for x in sub:
                    new[x] += delta
                y_s = sum(1 for x in new if x == d)
                table[(y, y_s, di, v_red, i, red_mask)][e] += w
    return {key: dict(c) for key, c in table.items()}


def enumerate_coupling_joint(params: ModelParams, exact: bool = False) -> JointLaw:
    """Exact joint law of (Y, Y^s, D(I), V, I, reduced graph)."""
    table = coupling_table(params.n, params.d)
    p = _edge_probability(params, exact)
    atoms = {key: _evaluate(coeffs, p, params.pairs) for key, coeffs in table.items()}
    return JointLaw(params.n, params.d, atoms)


def exact_psi(params: ModelParams, joint: JointLaw | None = None) -> float:
    """sqrt(Var(E[Y^s - Y | Y])) from the exact joint law."""
    joint = joint or enumerate_coupling_joint(params)
    py = defaultdict(int)
    diff = defaultdict(int)
    for (y, y_s), q in joint.marginal("y", "y_s").items():
        py[y] += q
        diff[y] += q * (y_s - y)
    cond = {y: diff[y] / py[y] for y in py if py[y]}
    if all(isinstance(q, Fraction) for q in py.values()):
        m = sum(py[y] * c for y, c in cond.items())
        var = sum(py[y] * (c - m) ** 2 for y, c in cond.items())
    else:
        m = math.fsum(py[y] * c for y, c in cond.items())
        var = math.fsum(py[y] * (c - m) ** 2 for y, c in cond.items())
    return math.sqrt(float(var))


def _standardised(dist: ExactDist, mu: float, sigma: float):
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    w = (np.asarray(dist.support, dtype=float) - mu) / sigma
    cdf = np.cumsum(np.asarray([float(q) for q in dist.probs]))
    cdf[-1] = 1.0
    return w, cdf


def exact_kolmogorov(dist: ExactDist, mu: float, sigma: float) -> float:
    """sup_z |P((Y-mu)/sigma <= z) - Φ(z)| for a finite law."""
    w, cdf = _standardised(dist, mu, sigma)
    phi = ndtr(w)
    left = np.concatenate([[0.0], cdf[:-1]])
    return float(max(np.max(np.abs(cdf - phi)), np.max(np.abs(left - phi))))


def _int_cdf(a):
    """Antiderivative of Φ: ∫_{-∞}^a Φ = aΦ(a) + φ(a)."""
    return a * ndtr(a) + math.exp(-a * a / 2) / math.sqrt(2 * math.pi)


def _int_abs_gap(c: float, a: float, b: float) -> float:
    """∫_a^b |c - Φ(z)| dz for finite a <= b."""
    if c <= 0:
        return _int_cdf(b) - _int_cdf(a)
    if c >= 1:
        return (b - a) - (_int_cdf(b) - _int_cdf(a))

    s = min(max(float(ndtri(c)), a), b)
    # below s: c - Φ >= 0, above s: Φ - c >= 0
    below = c * (s - a) - (_int_cdf(s) - _int_cdf(a))
    above = (_int_cdf(b) - _int_cdf(s)) - c * (b - s)
    return below + above


def exact_wasserstein(dist: ExactDist, mu: float, sigma: float) -> float:
    """∫ |F_W(z) - Φ(z)| dz for W = (Y-mu)/sigma, in closed form."""
    w, cdf = _standardised(dist, mu, sigma)
    total = [_int_cdf(w[0])]  # ∫_{-∞}^{w_0} Φ
    for i in range(len(w) - 1):
        total.append(_int_abs_gap(cdf[i], w[i], w[i + 1]))
    a = w[-1]
    total.append(math.exp(-a * a / 2) / math.sqrt(2 * math.pi) - a * (1 - ndtr(a)))
    return math.fsum(total)
