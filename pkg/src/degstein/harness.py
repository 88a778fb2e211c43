"""Monte Carlo experiments and numeric audits.

All randomness comes from substreams keyed by ``(seed, cell, chunk)``, and
every cell is split into a fixed sequence of chunks. Reports therefore do
not depend on how many worker threads were used.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from degstein.coupling import CoupledBatch, coupled_batch
from degstein.er_graph import SPARSE_THRESHOLD, ModelParams, sample_batch
from degstein.errors import DomainError
from degstein.moments import delta_n_theta, delta_theta, moment_set, rate, tau_n_theta, tau_theta
from degstein.streams import cell_key, substream

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
MIN_SAMPLES = 1000
DKW_ALPHA = 0.05
# graphs per chunk are capped so one chunk holds at most this many pair slots
_CHUNK_BUDGET = 1_000_000
# batch-means standard errors use this many contiguous batches
SE_BATCHES = 20


# ---------------------------------------------------------------------------
# estimators
# ---------------------------------------------------------------------------


def dkw_half_width(m: int, alpha: float = DKW_ALPHA) -> float:
    return math.sqrt(math.log(2 / alpha) / (2 * m))


def estimate_kolmogorov(samples, alpha: float = DKW_ALPHA) -> tuple[float, float]:
    """Kolmogorov distance of the empirical law of ``samples`` to N(0,1),
    plus the DKW half-width at level ``1 - alpha``."""
    x = np.sort(np.asarray(samples, dtype=float))
    m = len(x)
    if m == 0:
        raise DomainError("need at least one sample")
    phi = ndtr(x)
    i = np.arange(1, m + 1)
    dist = max(np.max(np.abs(i / m - phi)), np.max(np.abs((i - 1) / m - phi)))
    return float(dist), dkw_half_width(m, alpha)


def estimate_wasserstein(samples) -> float:
    """Mean |x_(i) - Φ^{-1}((i - 1/2)/m)| over the sorted sample."""
    x = np.sort(np.asarray(samples, dtype=float))
    m = len(x)
    if m == 0:
        raise DomainError("need at least one sample")
    q = ndtri((np.arange(1, m + 1) - 0.5) / m)
    return float(np.mean(np.abs(x - q)))


@dataclass(frozen=True)
class PsiEstimate:
    value: float
    degenerate: bool = False


def estimate_psi_binned(draws) -> PsiEstimate:
    """sqrt of the empirical variance of the per-y means of (Y^s - Y).

    ``draws`` is a :class:`CoupledBatch` or an iterable of coupled draws.
    Fewer than two distinct y values yields a flagged zero estimate.
    """
    if not isinstance(draws, CoupledBatch):
        draws = CoupledBatch.from_draws(draws)
    y = draws.y
    diff = (draws.y_s - draws.y).astype(float)
    values, inverse, counts = np.unique(y, return_inverse=True, return_counts=True)
    if len(values) < 2:
        return PsiEstimate(0.0, degenerate=True)
    means = np.bincount(inverse, weights=diff) / counts
    w = counts / counts.sum()
    centre = np.sum(w * means)
    return PsiEstimate(float(math.sqrt(max(np.sum(w * (means - centre) ** 2), 0.0))))


def batch_se(values, statistic, batches: int = SE_BATCHES) -> float:
    """Batch-means standard error of ``statistic`` over contiguous batches."""
    parts = np.array_split(np.arange(len(values[0]) if isinstance(values, tuple) else len(values)), batches)
    if isinstance(values, tuple):
        est = [statistic(*(v[p] for v in values)) for p in parts]
    else:
        est = [statistic(values[p]) for p in parts]
    return float(np.std(est, ddof=1) / math.sqrt(batches))


def _psi_of(y, y_s):
    values, inverse, counts = np.unique(y, return_inverse=True, return_counts=True)
    if len(values) < 2:
        return 0.0
    means = np.bincount(inverse, weights=(y_s - y).astype(float)) / counts
    w = counts / counts.sum()
    return float(math.sqrt(max(np.sum(w * (means - np.sum(w * means)) ** 2), 0.0)))


def psi_with_se(batch: CoupledBatch) -> tuple[float, float]:
    return estimate_psi_binned(batch).value, batch_se((batch.y, batch.y_s), _psi_of)


# ---------------------------------------------------------------------------
# configuration and chunked sampling
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepConfig:
    n_grid: tuple
    theta_grid: tuple
    d_list: tuple
    samples: int
    seed: int = 0
    b: float = 10.0
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "n_grid", tuple(int(n) for n in self.n_grid))
        object.__setattr__(self, "theta_grid", tuple(float(t) for t in self.theta_grid))
        object.__setattr__(self, "d_list", tuple(int(d) for d in self.d_list))
        if self.samples < MIN_SAMPLES:
            raise DomainError(f"samples={self.samples} below minimum {MIN_SAMPLES}")
        if not (self.n_grid and self.theta_grid and self.d_list):
            raise DomainError("empty grid")

    def cells(self, coupling: bool = False):
        """Feasible cells as :class:`ModelParams`; infeasible ones are logged and skipped."""
        out = []
        for d in self.d_list:
            for theta in self.theta_grid:
                for n in self.n_grid:
                    try:
                        params = ModelParams(n, d, theta, self.b)
                        if coupling and n < d + 2:
                            raise DomainError(f"coupling needs n >= d+2 = {d + 2}")
                    except DomainError as exc:
                        log.warning("skipping cell n=%s d=%s theta=%s: %s", n, d, theta, exc)
                        continue
                    out.append(params)
        return out

    def infeasible(self, coupling: bool = False) -> list[str]:
        bad = []
        for d in self.d_list:
            for theta in self.theta_grid:
                for n in self.n_grid:
                    try:
                        ModelParams(n, d, theta, self.b)
                        if coupling and n < d + 2:
                            raise DomainError(f"coupling needs n >= d+2 = {d + 2}")
                    except DomainError as exc:
                        bad.append(f"n={n} d={d} theta={theta}: {exc}")
        return bad


def chunk_sizes(params: ModelParams, samples: int) -> list[int]:
    """Fixed split of a cell's samples into chunks; depends only on the cell."""
    p = float(params.p)
    if p >= SPARSE_THRESHOLD:
        cost = params.pairs
    else:
        edges = params.pairs * p
        cost = params.n + int(edges + 8 * math.sqrt(edges) + 8)
    per = max(1, min(samples, _CHUNK_BUDGET // cost))
    sizes = [per] * (samples // per)
    if samples % per:
        sizes.append(samples % per)
    return sizes


def _run_chunks(params, samples, seed, threads, work):
    key = cell_key(params.n, params.d, params.theta)
    jobs = [(i, s) for i, s in enumerate(chunk_sizes(params, samples))]

    def one(job):
        i, s = job
        return work(params, substream(seed, key, i), s)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(one, jobs))
    return [one(j) for j in jobs]


def simulate_counts(params: ModelParams, samples: int, seed: int, threads: int = 1) -> np.ndarray:
    """``samples`` independent draws of Y_n."""
    parts = _run_chunks(params, samples, seed, threads, lambda p, rng, s: sample_batch(p, rng, s).counts(p.d))
    return np.concatenate(parts)


def simulate_coupled(params: ModelParams, samples: int, seed: int, threads: int = 1) -> CoupledBatch:
    return CoupledBatch.concat(_run_chunks(params, samples, seed, threads, coupled_batch))


# ---------------------------------------------------------------------------
# rate sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateCell:
    n: int
    theta: float
    d: int
    samples: int
    kolmogorov: float
    dkw_half_width: float
    alpha: float
    r: float
    product: float
    mu: float
    sigma: float


@dataclass(frozen=True)
class RateFit:
    theta: float
    d: int
    slope: float
    intercept: float
    c_hat: float
    product_ratio: float


def _table_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


@dataclass
class RateReport:
    cells: list
    fits: list
    seed: int
    skipped: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "rate_report",
            "seed": self.seed,
            "cells": [asdict(c) for c in self.cells],
            "fits": [asdict(f) for f in self.fits],
            "skipped": list(self.skipped),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        return _table_csv([asdict(c) for c in self.cells])


def fit_loglog(ns, values) -> tuple[float, float]:
    slope, intercept = np.polyfit(np.log(np.asarray(ns, float)), np.log(np.asarray(values, float)), 1)
    return float(slope), float(intercept)


def rate_sweep(cfg: SweepConfig) -> RateReport:
    cells = []
    for params in cfg.cells():
        ms = moment_set(params)
        y = simulate_counts(params, cfg.samples, cfg.seed, cfg.threads)
        w = (y - ms.mu) / ms.sigma
        dist, half = estimate_kolmogorov(w, DKW_ALPHA)
        cells.append(
            RateCell(params.n, float(params.theta), params.d, cfg.samples, dist, half, DKW_ALPHA, ms.r, dist * ms.r, ms.mu, ms.sigma)
        )
    fits = []
    for d in cfg.d_list:
        for theta in cfg.theta_grid:
            group = [c for c in cells if c.d == d and c.theta == theta]
            if len(group) < 2:
                continue
            slope, intercept = fit_loglog([c.n for c in group], [c.kolmogorov for c in group])
            prods = [c.product for c in group]
            fits.append(RateFit(theta, d, slope, intercept, max(prods), max(prods) / min(prods)))
    return RateReport(cells, fits, cfg.seed, cfg.infeasible())


# ---------------------------------------------------------------------------
# condition audit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AuditCell:
    n: int
    theta: float
    d: int
    samples: int
    mu: float
    sigma2: float
    r: float
    psi_hat: float
    psi_se: float
    q1: float
    q2: float
    q3: float
    q4: float
    k2: float
    k4: float
    b2: float
    l2: float
    wasserstein_bound: float
    wasserstein_bound_se: float
    wasserstein_hat: float
    wasserstein_se: float
    kn_sufficient: float
    bn_sufficient: float
    t_l: dict
    sigma2_ratio: float
    r_ratio: float
    coupling_violations: int
    removal_violations: int


@dataclass
class AuditReport:
    cells: list
    verdicts: list
    seed: int
    skipped: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "audit_report",
            "seed": self.seed,
            "cells": [asdict(c) for c in self.cells],
            "verdicts": list(self.verdicts),
            "skipped": list(self.skipped),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        rows = []
        for c in self.cells:
            row = asdict(c)
            t = row.pop("t_l")
            row["t_l"] = ";".join(f"{l}:{v:.17g}" for l, v in sorted(t.items()))
            rows.append(row)
        return _table_csv(rows)


AUDITED = ("q1", "q2", "q4")


def audit_cell(params: ModelParams, batch: CoupledBatch) -> AuditCell:
    ms = moment_set(params)
    mu, s2, r = ms.mu, ms.sigma2, ms.r
    sigma = math.sqrt(s2)
    k = batch.k.astype(float)
    b = batch.b.astype(float)
    l = batch.l
    w = (batch.y - mu) / sigma
    in_f = l <= 1  # s_{n,θ} = 1
    psi_hat, psi_se = psi_with_se(batch)
    k2 = float(np.mean(k**2))
    k4 = float(np.mean(k**4))
    b2 = float(np.mean(b**2))
    t_l = {int(v): float(np.mean(k**2 * (l == v)) / k2) for v in np.unique(l)}

    def bound(y, y_s, kk):
        return 0.8 * mu * _psi_of(y, y_s) / s2 + mu * np.mean(kk.astype(float) ** 2) / sigma**3

    psi_red = ms.psi
    red = moment_set(params.with_n(params.n - 1, psi_red))
    return AuditCell(
        n=params.n,
        theta=float(params.theta),
        d=params.d,
        samples=len(batch),
        mu=mu,
        sigma2=s2,
        r=r,
        psi_hat=psi_hat,
        psi_se=psi_se,
        q1=r * mu * psi_hat / s2,
        q2=r * mu * float(np.mean((1 + np.abs(w)) * k**2)) / sigma**3,
        q3=r**2 * mu * float(np.mean(k**2 * (~in_f))) / sigma**3,
        q4=r**2 * mu * float(np.mean(k**2 * b)) / s2**2,
        k2=k2,
        k4=k4,
        b2=b2,
        l2=float(np.mean(l.astype(float) ** 2)),
        wasserstein_bound=0.8 * mu * psi_hat / s2 + mu * k2 / sigma**3,
        wasserstein_bound_se=batch_se((batch.y, batch.y_s, batch.k), bound),
        wasserstein_hat=estimate_wasserstein(w),
        wasserstein_se=batch_se(w, estimate_wasserstein),
        kn_sufficient=r * mu * math.sqrt(k4) / sigma**3,
        bn_sufficient=r**2 * mu * math.sqrt(k4) * math.sqrt(b2) / s2**2,
        t_l=t_l,
        sigma2_ratio=s2 / red.sigma2,
        r_ratio=r / red.r,
        coupling_violations=int(np.count_nonzero(~coupling_bounds_hold(batch, params.d))),
        removal_violations=int(np.count_nonzero(~removal_bounds_hold(batch))),
    )


def coupling_bounds_hold(batch: CoupledBatch, d: int) -> np.ndarray:
    """Per draw: |Y^s - Y| <= 1 + |d - D(I)| <= K."""
    mid = 1 + np.abs(d - batch.deg_chosen)
    return (np.abs(batch.y_s - batch.y) <= mid) & (mid <= batch.k)


def removal_bounds_hold(batch: CoupledBatch) -> np.ndarray:
    """Per draw: |Y - V| <= 1 + D(I) <= K."""
    mid = 1 + batch.deg_chosen
    return (np.abs(batch.y - batch.v_reduced) <= mid) & (mid <= batch.k)


def boundedness_verdict(ns, values, factor: float = 2.0) -> tuple[bool, float, float]:
    """Max over the larger-n half of the grid against ``factor`` times the
    max over the smaller-n half."""
    order = np.argsort(ns)
    vals = np.asarray(values, float)[order]
    half = len(vals) // 2
    small, large = float(np.max(vals[: max(half, 1)])), float(np.max(vals[half:]))
    return large <= factor * small, small, large


def condition_audit(cfg: SweepConfig) -> AuditReport:
    cells = []
    for params in cfg.cells(coupling=True):
        batch = simulate_coupled(params, cfg.samples, cfg.seed, cfg.threads)
        cells.append(audit_cell(params, batch))
    verdicts = []
    for d in cfg.d_list:
        for theta in cfg.theta_grid:
            group = sorted((c for c in cells if c.d == d and c.theta == theta), key=lambda c: c.n)
            if len(group) < 2:
                continue
            for name in AUDITED + ("kn_sufficient", "bn_sufficient"):
                ok, small, large = boundedness_verdict([c.n for c in group], [getattr(c, name) for c in group])
                verdicts.append(
                    {"theta": theta, "d": d, "quantity": name, "small_max": small, "large_max": large, "bounded": ok}
                )
    return AuditReport(cells, verdicts, cfg.seed, cfg.infeasible(coupling=True))


# ---------------------------------------------------------------------------
# ratio convergence and the recursion bound
# ---------------------------------------------------------------------------


def ratio_convergence(b: float, d: int, n_list, grid_size: int = 100) -> list[dict]:
    """Worst deviation from 1, over θ in (0, b], of the four ratios
    τ_n/τ, δ_n/δ, r_{n,θ}/r_{n-1,ψ}, σ²_{n,θ}/σ²_{n-1,ψ} and their reciprocals."""
    if not b > 0:
        raise DomainError(f"b must be positive, got {b}")
    thetas = np.linspace(b / grid_size, b, grid_size)
    rows = []
    for n in n_list:
        if n < d + 2:
            raise DomainError(f"n={n} too small for the reduced problem (need n >= d+2)")
        worst = {"tau": 0.0, "delta": 0.0, "r": 0.0, "sigma2": 0.0}
        for theta in thetas:
            if not theta < n - 1:
                continue
            params = ModelParams(n, d, float(theta), b)
            tn, t = tau_n_theta(params), tau_theta(float(theta), d)
            dn, dl = delta_n_theta(params, tn), delta_theta(float(theta), d)
            psi = (n - 2) / (n - 1) * float(theta)
            red = ModelParams(n - 1, d, psi, b)
            r_ratio = rate(n, float(theta), d) / rate(n - 1, psi, d)
            s_ratio = (n * tn * dn) / ((n - 1) * tau_n_theta(red) * delta_n_theta(red))
            for name, ratio in (("tau", tn / t), ("delta", dn / dl), ("r", r_ratio), ("sigma2", s_ratio)):
                worst[name] = max(worst[name], abs(ratio - 1), abs(1 / ratio - 1))
        rows.append({"n": int(n), **worst})
    return rows


@dataclass(frozen=True)
class RecursionResult:
    a: np.ndarray
    b: np.ndarray
    supremum: float
    c: float
    gamma: float
    alpha: float


def recursion_bound(f: float, tau: float, p, a_init, horizon: int) -> RecursionResult:
    """Dominating sequence for a_n <= sum_l a_{n-l} p_{n,l} + f.

    ``p`` holds weight rows ``p[n, l]`` (lag ``l = 0..L``); rows for
    ``n <= n1`` are ignored and a single row is reused for every n.
    ``a_init`` gives ``a_0..a_{n1}``. Returns the worst case ``a_n`` (the
    recursion run with equality beyond ``n1``) together with ``b_n``.
    """
    if not 0 < tau < 1:
        raise DomainError(f"tau must lie in (0, 1), got {tau}")
    if f < 0:
        raise DomainError(f"f must be nonnegative, got {f}")
    p = np.atleast_2d(np.asarray(p, dtype=float))
    if np.any(p < 0) or np.any(p.sum(axis=1) > tau * (1 + 1e-12)):
        raise DomainError("weight rows must be nonnegative with sums <= tau")
    a_init = np.asarray(a_init, dtype=float)
    n1 = len(a_init) - 1
    alpha = float(a_init.max())
    a_const = f / (1 - tau)
    c = max(a_const, alpha * (1 - tau))
    gamma = alpha - c / (1 - tau)

    n_idx = np.arange(horizon + 1)
    b_seq = np.where(n_idx <= n1, alpha, gamma * tau ** np.maximum(n_idx - n1, 0) + c / (1 - tau))

    a = np.empty(horizon + 1)
    a[: n1 + 1] = a_init[: horizon + 1]
    lags = p.shape[1]
    for n in range(n1 + 1, horizon + 1):
        row = p[min(n, len(p) - 1)] if len(p) > 1 else p[0]
        acc = f
        for l in range(1, min(lags, n + 1)):
            acc += a[n - l] * row[l]
        a[n] = acc / (1 - row[0])
    return RecursionResult(a, b_seq, c / (1 - tau), c, gamma, alpha)
