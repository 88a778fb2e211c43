"""Erdős–Rényi graphs G(n, θ/(n-1)) and their degree statistics.

Vertices are labelled ``0..n-1``. Unordered pairs ``{u, v}`` with ``u < v``
are linearised as ``k = v(v-1)/2 + u``, which is the order used by both the
dense and the geometric-skip samplers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np

from degstein.errors import DomainError
from degstein.streams import as_generator

# Below this edge probability the geometric-skip sampler is the default.
SPARSE_THRESHOLD = 0.1


@dataclass(frozen=True)
class ModelParams:
    """Parameters ``(n, d, θ, b)`` of the degree-count problem.

    ``theta`` may be a :class:`fractions.Fraction`, in which case :attr:`p`
    is exact as well; the enumeration oracle uses this for its rational mode.
    """

    n: int
    d: int
    theta: float | Fraction
    b: float = 10.0

    def __post_init__(self):
        if self.d < 1:
            raise DomainError(f"target degree d must be >= 1, got {self.d}")
        if self.n < self.d + 1:
            raise DomainError(f"n must be >= d+1 = {self.d + 1}, got n={self.n}")
        if self.b <= 0:
            raise DomainError(f"cap b must be positive, got {self.b}")
        if not 0 < self.theta < self.n - 1:
            raise DomainError(
                f"theta={float(self.theta)} outside Theta_n: need 0 < theta < n-1 = {self.n - 1}"
            )
        if self.theta > self.b:
            raise DomainError(f"theta={float(self.theta)} outside Theta_n: need theta <= b = {self.b}")

    @property
    def p(self) -> float | Fraction:
        return self.theta / (self.n - 1)

    @property
    def pairs(self) -> int:
        return self.n * (self.n - 1) // 2

    def with_n(self, n: int, theta=None) -> ModelParams:
        return ModelParams(n, self.d, self.theta if theta is None else theta, self.b)


def pair_index(u, v):
    """Linear index of the unordered pair ``{u, v}`` (``u != v``)."""
    u, v = np.minimum(u, v), np.maximum(u, v)
    return v * (v - 1) // 2 + u


def pair_from_index(k):
    """Inverse of :func:`pair_index`; returns ``(u, v)`` with ``u < v``."""
    k = np.asarray(k, dtype=np.int64)
    v = ((1 + np.sqrt(1 + 8 * k.astype(np.float64))) // 2).astype(np.int64)
    # float sqrt can be off by one near triangular numbers
    v = np.where(v * (v - 1) // 2 > k, v - 1, v)
    v = np.where((v + 1) * v // 2 <= k, v + 1, v)
    u = k - v * (v - 1) // 2
    return u, v


@dataclass(frozen=True, eq=False)
class GraphSample:
    """Immutable simple graph on ``n`` vertices.

    ``edges`` is an ``(m, 2)`` array of pairs ``u < v`` sorted by pair index;
    ``degrees`` is kept in sync by the constructors.
    """

    n: int
    edges: np.ndarray
    degrees: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.edges.setflags(write=False)
        self.degrees.setflags(write=False)

    @classmethod
    def from_edges(cls, n: int, edges) -> GraphSample:
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if len(e):
            if np.any(e[:, 0] == e[:, 1]):
                raise DomainError("self-loops are not allowed")
            if e.min() < 0 or e.max() >= n:
                raise DomainError("edge endpoint out of range")
        k = np.unique(pair_index(e[:, 0], e[:, 1]))
        return cls.from_pair_indices(n, k)

    @classmethod
    def from_pair_indices(cls, n: int, k) -> GraphSample:
        k = np.asarray(k, dtype=np.int64)
        u, v = pair_from_index(k)
        degrees = np.bincount(np.concatenate([u, v]), minlength=n).astype(np.int64)
        return cls(n, np.stack([u, v], axis=1), degrees)

    @classmethod
    def from_mask(cls, n: int, mask: int) -> GraphSample:
        """Graph whose pair ``k`` is present iff bit ``k`` of ``mask`` is set."""
        ks = [k for k in range(n * (n - 1) // 2) if mask >> k & 1]
        return cls.from_pair_indices(n, ks)

    @classmethod
    def empty(cls, n: int) -> GraphSample:
        return cls.from_pair_indices(n, [])

    @classmethod
    def complete(cls, n: int) -> GraphSample:
        return cls.from_pair_indices(n, np.arange(n * (n - 1) // 2))

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @cached_property
    def pair_indices(self) -> np.ndarray:
        return pair_index(self.edges[:, 0], self.edges[:, 1])

    @property
    def mask(self) -> int:
        return sum(1 << int(k) for k in self.pair_indices)

    @cached_property
    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n), dtype=bool)
        a[self.edges[:, 0], self.edges[:, 1]] = True
        a[self.edges[:, 1], self.edges[:, 0]] = True
        a.setflags(write=False)
        return a

    def neighbors(self, v: int) -> np.ndarray:
        e = self.edges
        return np.sort(np.concatenate([e[e[:, 0] == v, 1], e[e[:, 1] == v, 0]]))

    def non_neighbors(self, v: int) -> np.ndarray:
        """Vertices other than ``v`` not adjacent to ``v``, in vertex order."""
        keep = np.ones(self.n, dtype=bool)
        keep[v] = False
        keep[self.neighbors(v)] = False
        return np.flatnonzero(keep)

    def has_edge(self, u: int, v: int) -> bool:
        return u != v and bool(np.any(self.pair_indices == pair_index(u, v)))

    def __eq__(self, other):
        if not isinstance(other, GraphSample):
            return NotImplemented
        return self.n == other.n and np.array_equal(self.pair_indices, other.pair_indices)

    def __hash__(self):
        return hash((self.n, self.pair_indices.tobytes()))


def count_degree(g: GraphSample, d: int) -> int:
    """Number of vertices of ``g`` with degree exactly ``d``."""
    return int(np.count_nonzero(g.degrees == d))


def _dense_pair_indices(pairs: int, p: float, rng: np.random.Generator) -> np.ndarray:
    return np.flatnonzero(rng.random(pairs) < p)


def _skip_pair_indices(pairs: int, p: float, rng: np.random.Generator) -> np.ndarray:
    # successive gaps between successes of a Bernoulli(p) sequence are Geometric(p)
    out = []
    pos = -1
    expected = pairs * p
    block = max(16, int(expected + 6 * math.sqrt(expected + 1)))
    while True:
        gaps = rng.geometric(p, size=block)
        idx = pos + np.cumsum(gaps)
        out.append(idx[idx < pairs])
        if idx[-1] >= pairs:
            break
        pos = int(idx[-1])
    return np.concatenate(out)


def sample_graph(params: ModelParams, stream, method: str = "auto") -> GraphSample:
    """Draw one graph from G(n, θ/(n-1)).

    ``method`` is ``"dense"`` (one uniform per pair), ``"sparse"``
    (geometric skips, cost proportional to n plus the edge count) or
    ``"auto"``, which picks sparse below :data:`SPARSE_THRESHOLD`.
    """
    rng = as_generator(stream)
    p = float(params.p)
    if method == "auto":
        method = "sparse" if p < SPARSE_THRESHOLD else "dense"
    if method == "sparse":
        k = _skip_pair_indices(params.pairs, p, rng)
    elif method == "dense":
        k = _dense_pair_indices(params.pairs, p, rng)
    else:
        raise ValueError(f"unknown sampling method {method!r}")
    return GraphSample.from_pair_indices(params.n, k)


def sparse_sample_equivalent(params: ModelParams, stream) -> GraphSample:
    return sample_graph(params, stream, method="sparse")


@dataclass(frozen=True)
class EdgeBatch:
    """Edge lists of ``size`` independent graphs on ``n`` vertices.

    Edge ``i`` joins ``u[i] < v[i]`` in graph ``row[i]``; rows are sorted.
    """

    n: int
    size: int
    row: np.ndarray
    u: np.ndarray
    v: np.ndarray

    @cached_property
    def degrees(self) -> np.ndarray:
        flat = np.bincount(
            np.concatenate([self.row * self.n + self.u, self.row * self.n + self.v]),
            minlength=self.size * self.n,
        )
        return flat.reshape(self.size, self.n)

    @property
    def edge_counts(self) -> np.ndarray:
        return np.bincount(self.row, minlength=self.size)

    def graph(self, i: int) -> GraphSample:
        sel = self.row == i
        return GraphSample.from_edges(self.n, np.stack([self.u[sel], self.v[sel]], axis=1))

    def counts(self, d: int) -> np.ndarray:
        return np.count_nonzero(self.degrees == d, axis=1)


def sample_batch(params: ModelParams, stream, size: int, method: str = "auto") -> EdgeBatch:
    """Vectorised draw of ``size`` independent graphs."""
    rng = as_generator(stream)
    p = float(params.p)
    pairs = params.pairs
    if method == "auto":
        method = "sparse" if p < SPARSE_THRESHOLD else "dense"
    if method == "dense":
        row, k = np.nonzero(rng.random((size, pairs)) < p)
    elif method == "sparse":
        row, k = _skip_batch(pairs, p, size, rng)
    else:
        raise ValueError(f"unknown sampling method {method!r}")
    u, v = pair_from_index(k)
    return EdgeBatch(params.n, size, row.astype(np.int64), u, v)


def _skip_batch(pairs: int, p: float, size: int, rng: np.random.Generator):
    expected = pairs * p
    width = max(8, int(expected + 8 * math.sqrt(expected) + 8))
    pos = np.cumsum(rng.geometric(p, size=(size, width)), axis=1) - 1
    row, col = np.nonzero(pos < pairs)
    k = pos[row, col]
    # rows whose block ran out before passing the last pair keep drawing
    short = np.flatnonzero(pos[:, -1] < pairs)
    if len(short):
        extra_rows, extra_k = [row], [k]
        for r in short:
            tail = _skip_pair_indices(pairs - 1 - int(pos[r, -1]), p, rng) + int(pos[r, -1]) + 1
            extra_rows.append(np.full(len(tail), r, dtype=np.int64))
            extra_k.append(tail)
        row = np.concatenate(extra_rows)
        k = np.concatenate(extra_k)
        order = np.lexsort((k, row))
        row, k = row[order], k[order]
    return row, k
