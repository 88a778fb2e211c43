"""Size-bias coupling for the degree-d count and the vertex-removal reduction.

Given a graph and a vertex ``v``, :func:`size_bias_step` forces ``v`` to have
degree ``d`` by deleting edges to a uniform subset of its neighbours or by
adding edges to a uniform subset of its non-neighbours. Choosing ``v``
uniformly at random gives a draw of the size-biased count. The same graph
with the chosen vertex deleted gives the reduced count used by the
inductive argument.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from degstein.er_graph import GraphSample, ModelParams, count_degree, pair_index, sample_batch, sample_graph
from degstein.errors import DomainError
from degstein.streams import as_generator


@dataclass(frozen=True)
class CoupledDraw:
    y: int
    y_s: int
    chosen: int
    deg_chosen: int
    k: int
    edit_set: frozenset
    v_reduced: int
    l: int = 1
    b: int = 0

    @property
    def j(self) -> tuple[int, int]:
        """The conditioning pair (chosen vertex, its degree)."""
        return self.chosen, self.deg_chosen


def _uniform_subset(pool: np.ndarray, size: int, rng: np.random.Generator) -> np.ndarray:
    # partial Fisher-Yates: the first `size` slots end up a uniform subset
    pool = np.array(pool, copy=True)
    for i in range(size):
        j = int(rng.integers(i, len(pool)))
        pool[i], pool[j] = pool[j], pool[i]
    return np.sort(pool[:size])


def size_bias_step(g: GraphSample, v: int, d: int, stream) -> tuple[GraphSample, frozenset]:
    """Return ``(G^v, R^v)``: ``g`` adjusted so that ``v`` has degree ``d``."""
    if not 0 <= v < g.n:
        raise DomainError(f"vertex {v} not in graph on {g.n} vertices")
    if d > g.n - 1:
        raise DomainError(f"degree {d} impossible on {g.n} vertices")
    deg = int(g.degrees[v])
    if deg == d:
        return g, frozenset()
    rng = as_generator(stream)
    if deg > d:
        r = _uniform_subset(g.neighbors(v), deg - d, rng)
        drop = {int(pair_index(v, int(w))) for w in r}
        keep = [k for k in g.pair_indices.tolist() if k not in drop]
        out = GraphSample.from_pair_indices(g.n, keep)
    else:
        r = _uniform_subset(g.non_neighbors(v), d - deg, rng)
        new = np.stack([np.full(len(r), v), r], axis=1)
        out = GraphSample.from_edges(g.n, np.concatenate([g.edges, new]))
    return out, frozenset(int(w) for w in r)


def remove_vertex(g: GraphSample, v: int) -> GraphSample:
    """Delete ``v`` and its edges, relabelling the rest in their original order."""
    if g.n < 2:
        raise DomainError("cannot remove a vertex from a graph with fewer than 2 vertices")
    e = g.edges
    e = e[(e[:, 0] != v) & (e[:, 1] != v)]
    return GraphSample.from_edges(g.n - 1, np.where(e > v, e - 1, e))


def coupled_draw(params: ModelParams, stream, graph: GraphSample | None = None, chosen: int | None = None) -> CoupledDraw:
    """One joint realisation of (Y, Y^s, I, D(I), K, R, V).

    ``graph`` and ``chosen`` override the random graph and the random vertex;
    they exist so hand-worked cases can be reproduced exactly.
    """
    if params.n < params.d + 2:
        raise DomainError(f"coupling needs n >= d+2, got n={params.n}, d={params.d}")
    rng = as_generator(stream)
    d = params.d
    g = sample_graph(params, rng) if graph is None else graph
    i = int(rng.integers(g.n)) if chosen is None else int(chosen)
    g_s, edits = size_bias_step(g, i, d, rng)
    deg = int(g.degrees[i])
    k = 1 + d + deg
    return CoupledDraw(
        y=count_degree(g, d),
        y_s=count_degree(g_s, d),
        chosen=i,
        deg_chosen=deg,
        k=k,
        edit_set=edits,
        v_reduced=count_degree(remove_vertex(g, i), d),
        l=1,
        b=k,
    )


@dataclass(frozen=True)
class CoupledBatch:
    """Column-oriented coupled draws; field meanings follow :class:`CoupledDraw`."""

    y: np.ndarray
    y_s: np.ndarray
    chosen: np.ndarray
    deg_chosen: np.ndarray
    k: np.ndarray
    edit_size: np.ndarray
    v_reduced: np.ndarray
    l: np.ndarray
    b: np.ndarray

    def __len__(self):
        return len(self.y)

    @classmethod
    def concat(cls, parts) -> CoupledBatch:
        parts = list(parts)
        return cls(**{f: np.concatenate([getattr(p, f) for p in parts]) for f in cls.__dataclass_fields__})

    @classmethod
    def from_draws(cls, draws) -> CoupledBatch:
        draws = list(draws)
        cols = {
            "y": [x.y for x in draws],
            "y_s": [x.y_s for x in draws],
            "chosen": [x.chosen for x in draws],
            "deg_chosen": [x.deg_chosen for x in draws],
            "k": [x.k for x in draws],
            "edit_size": [len(x.edit_set) for x in draws],
            "v_reduced": [x.v_reduced for x in draws],
            "l": [x.l for x in draws],
            "b": [x.b for x in draws],
        }
        return cls(**{f: np.asarray(c, dtype=np.int64) for f, c in cols.items()})


def coupled_batch(params: ModelParams, stream, size: int) -> CoupledBatch:
    """Vectorised equivalent of ``size`` calls to :func:`coupled_draw`.

    Y^s and V are obtained by recounting modified degree vectors, not by
    bookkeeping of the affected vertices.
    """
    if params.n < params.d + 2:
        raise DomainError(f"coupling needs n >= d+2, got n={params.n}, d={params.d}")
    rng = as_generator(stream)
    n, d = params.n, params.d
    g = sample_batch(params, rng, size)
    chosen = rng.integers(n, size=size)
    deg = g.degrees
    rows = np.arange(size)
    deg_chosen = deg[rows, chosen]
    y = np.count_nonzero(deg == d, axis=1)

    # neighbours of the chosen vertex, one entry per incident edge
    at_u = g.u == chosen[g.row]
    at_v = g.v == chosen[g.row]
    inc = at_u | at_v
    nb_row = g.row[inc]
    nb = np.where(at_u[inc], g.v[inc], g.u[inc])

    # reduced graph: the chosen vertex's neighbours lose one degree
    red = deg.copy()
    np.subtract.at(red, (nb_row, nb), 1)
    red[rows, chosen] = -1
    v_reduced = np.count_nonzero(red == d, axis=1)

    size_biased = deg.copy()
    size_biased[rows, chosen] = d
    # removals: random keys, keep the (D - d) smallest within each row
    excess = np.maximum(deg_chosen - d, 0)
    keys = rng.random(len(nb))
    order = np.lexsort((keys, nb_row))
    nb_row_s, nb_s = nb_row[order], nb[order]
    start = np.searchsorted(nb_row_s, nb_row_s, side="left")
    rank = np.arange(len(nb_row_s)) - start
    drop = rank < excess[nb_row_s]
    np.subtract.at(size_biased, (nb_row_s[drop], nb_s[drop]), 1)
    # additions: sequential rejection sampling among non-neighbours
    need = np.maximum(d - deg_chosen, 0)
    add_rows = np.flatnonzero(need > 0)
    if len(add_rows):
        targets = _sample_non_neighbours(n, chosen, need, add_rows, nb_row, nb, rng)
        for col in range(targets.shape[1]):
            sel = targets[:, col] >= 0
            size_biased[add_rows[sel], targets[sel, col]] += 1
    y_s = np.count_nonzero(size_biased == d, axis=1)

    k = 1 + d + deg_chosen
    as_int = lambda a: np.asarray(a, dtype=np.int64)  # noqa: E731
    return CoupledBatch(
        y=as_int(y),
        y_s=as_int(y_s),
        chosen=as_int(chosen),
        deg_chosen=as_int(deg_chosen),
        k=as_int(k),
        edit_size=as_int(np.abs(d - deg_chosen)),
        v_reduced=as_int(v_reduced),
        l=np.ones(size, dtype=np.int64),
        b=as_int(k),
    )


def _sample_non_neighbours(n, chosen, need, add_rows, nb_row, nb, rng, rounds=4):
    """For each row in ``add_rows`` pick ``need[row]`` distinct uniform
    non-neighbours of ``chosen[row]``; unused slots hold -1."""
    width = int(need[add_rows].max())
    m = len(add_rows)
    out = np.full((m, width), -1, dtype=np.int64)
    got = np.zeros(m, dtype=np.int64)
    adjacent = np.unique(nb_row * n + nb)
    want = need[add_rows]
    ch = chosen[add_rows]
    for _ in range(rounds * width + 4):
        todo = got < want
        if not todo.any():
            return out
        idx = np.flatnonzero(todo)
        cand = rng.integers(n - 1, size=len(idx))
        cand = cand + (cand >= ch[idx])  # skip the chosen vertex itself
        code = add_rows[idx] * n + cand
        pos = np.searchsorted(adjacent, code)
        ok = (pos >= len(adjacent)) | (adjacent[np.minimum(pos, len(adjacent) - 1)] != code)
        ok &= ~np.any(out[idx] == cand[:, None], axis=1)
        acc = idx[ok]
        out[acc, got[acc]] = cand[ok]
        got[acc] += 1
    # rare stragglers (dense neighbourhoods): finish exactly per row
    for i in np.flatnonzero(got < want):
        r = add_rows[i]
        banned = set(nb[nb_row == r].tolist()) | {int(ch[i])} | set(out[i, : got[i]].tolist())
        pool = np.array([w for w in range(n) if w not in banned], dtype=np.int64)
        extra = rng.choice(pool, size=int(want[i] - got[i]), replace=False)
        out[i, got[i] : want[i]] = extra
        got[i] = want[i]
    return out
