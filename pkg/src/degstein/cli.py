"""Command-line interface.

Settings are resolved as flags > ``DEGSTEIN_*`` environment variables >
``--config`` file (JSON or ``key=value`` lines) > built-in defaults.

Exit codes: 0 success, 1 a numeric check failed, 2 usage or domain error,
3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

import numpy as np

from degstein import __version__
from degstein.errors import DomainError, EnumerationCapError
from degstein.er_graph import ModelParams
from degstein.harness import (
    MIN_SAMPLES,
    SweepConfig,
    audit_cell,
    condition_audit,
    coupling_bounds_hold,
    rate_sweep,
    ratio_convergence,
    recursion_bound,
    removal_bounds_hold,
    simulate_coupled,
)
from degstein.moments import moment_set
from degstein.oracle import MARGINAL_CAP, enumerate_count_law
from degstein.stein_kernel import SmoothedIndicator, SteinSolution, bound_maxima, smoothness_bound_check

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
ENV_PREFIX = "DEGSTEIN_"

DEFAULTS = {
    "n": "50,100,200,400,800",
    "theta": "1",
    "d": "1",
    "b": 10.0,
    "samples": 20000,
    "seed": 0,
    "threads": 1,
    "out": None,
    "format": "json",
    "rational": False,
    "z": 0.0,
    "lambda": 1.0,
    "step": 1e-3,
    "trials": 10000,
    "f": 1.0,
    "tau": 0.5,
    "weights": None,
    "a_init": "0",
    "horizon": 60,
    "grid_size": 100,
}
_TYPES = {
    "b": float, "samples": int, "seed": int, "threads": int, "z": float, "lambda": float,
    "step": float, "trials": int, "f": float, "tau": float, "horizon": int, "grid_size": int,
    "rational": lambda v: str(v).lower() in ("1", "true", "yes", "on"),
}


class UsageError(Exception):
    pass


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OSError(f"cannot read config {path}: {exc}") from exc
    text_s = text.strip()
    if text_s.startswith("{"):
        return json.loads(text_s)
    out = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            key, _, value = line.partition("=")
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, config file, environment and explicit flags."""
    cfg = dict(DEFAULTS)
    cfg.update(_load_config(getattr(args, "config", None)))
    for key in DEFAULTS:
        env = os.environ.get(ENV_PREFIX + key.upper())
        if env is not None:
            cfg[key] = env
    for key, value in vars(args).items():
        if key in DEFAULTS and value is not None:
            cfg[key] = value
    for key, conv in _TYPES.items():
        if cfg.get(key) is not None:
            cfg[key] = conv(cfg[key])
    return cfg


def _ints(v) -> list[int]:
    return [int(x) for x in str(v).split(",") if x.strip()]


def _floats(v) -> list[float]:
    return [float(x) for x in str(v).split(",") if x.strip()]


def _single(values, name):
    if len(values) != 1:
        raise UsageError(f"--{name} takes a single value here")
    return values[0]


def manifest(command: str, cfg: dict, started: float) -> dict:
    return {
        "command": command,
        "config": {k: v for k, v in cfg.items() if not k.startswith("_")},
        "seed": cfg.get("seed"),
        "version": __version__,
        "duration_s": time.perf_counter() - started,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }


def _emit(payload: dict, cfg: dict, csv_text: str | None = None):
    """Write JSON (and CSV when available) to ``--out`` or stdout."""
    out = cfg.get("out")
    if out is None:
        if cfg["format"] == "csv" and csv_text is not None:
            sys.stdout.write(csv_text)
        else:
            print(json.dumps(payload, indent=2, sort_keys=True))
        return
    stem = Path(out)
    if stem.suffix in (".json", ".csv"):
        stem = stem.with_suffix("")
    stem.parent.mkdir(parents=True, exist_ok=True)
    Path(f"{stem}.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    if csv_text is not None:
        Path(f"{stem}.csv").write_text(csv_text)
        Path(f"{stem}.manifest.json").write_text(json.dumps(payload["manifest"], indent=2, sort_keys=True) + "\n")


def _sweep(cfg: dict, coupling: bool) -> SweepConfig:
    if cfg["samples"] < MIN_SAMPLES:
        raise UsageError(f"--samples {cfg['samples']} below minimum {MIN_SAMPLES}")
    sweep = SweepConfig(_ints(cfg["n"]), _floats(cfg["theta"]), _ints(cfg["d"]), cfg["samples"], cfg["seed"], cfg["b"], cfg["threads"])
    bad = sweep.infeasible(coupling=coupling)
    if bad:
        raise DomainError("invalid cell(s): " + "; ".join(bad))
    return sweep


def cmd_enumerate(cfg: dict, started: float) -> int:
    n, d = _single(_ints(cfg["n"]), "n"), _single(_ints(cfg["d"]), "d")
    if n > MARGINAL_CAP:
        raise EnumerationCapError(f"n exceeds enumeration cap ({n} > {MARGINAL_CAP})")
    theta_text = _single(str(cfg["theta"]).split(","), "theta").strip()
    theta = Fraction(theta_text) if cfg["rational"] else float(theta_text)
    params = ModelParams(n, d, theta, cfg["b"])
    dist = enumerate_count_law(params, exact=cfg["rational"])
    ms = moment_set(ModelParams(n, d, float(theta), cfg["b"]))
    mean, var = float(dist.mean()), float(dist.var())
    payload = {
        "schema_version": 1,
        "kind": "count_law",
        "n": n, "d": d, "theta": theta_text,
        "pmf": dist.to_json(),
        "mu": ms.mu, "sigma2": ms.sigma2,
        "residuals": {"mu": mean - ms.mu, "sigma2": var - ms.sigma2},
        "manifest": manifest("enumerate", cfg, started),
    }
    _emit(payload, cfg)
    return EXIT_OK


def cmd_simulate(cfg: dict, started: float) -> int:
    n, d, theta = _single(_ints(cfg["n"]), "n"), _single(_ints(cfg["d"]), "d"), _single(_floats(cfg["theta"]), "theta")
    params = ModelParams(n, d, theta, cfg["b"])
    if cfg["samples"] < MIN_SAMPLES:
        raise UsageError(f"--samples {cfg['samples']} below minimum {MIN_SAMPLES}")
    batch = simulate_coupled(params, cfg["samples"], cfg["seed"], cfg["threads"])
    cell = audit_cell(params, batch)
    payload = {
        "schema_version": 1,
        "kind": "coupled_summary",
        "n": n, "d": d, "theta": theta, "samples": len(batch),
        "mean_y": float(batch.y.mean()), "mean_y_s": float(batch.y_s.mean()),
        "mean_v": float(batch.v_reduced.mean()),
        "mu": cell.mu, "sigma2": cell.sigma2,
        "psi_hat": cell.psi_hat, "psi_se": cell.psi_se,
        "coupling_bound_failures": int(np.count_nonzero(~coupling_bounds_hold(batch, d))),
        "removal_bound_failures": int(np.count_nonzero(~removal_bounds_hold(batch))),
        "manifest": manifest("simulate", cfg, started),
    }
    _emit(payload, cfg)
    return EXIT_OK


def cmd_rate(cfg: dict, started: float) -> int:
    report = rate_sweep(_sweep(cfg, coupling=False))
    payload = report.to_dict() | {"manifest": manifest("rate", cfg, started)}
    _emit(payload, cfg, report.to_csv())
    return EXIT_OK


def cmd_audit(cfg: dict, started: float) -> int:
    report = condition_audit(_sweep(cfg, coupling=True))
    payload = report.to_dict() | {"manifest": manifest("audit", cfg, started)}
    _emit(payload, cfg, report.to_csv())
    return EXIT_OK


def cmd_stein_check(cfg: dict, started: float) -> int:
    sol = SteinSolution.for_indicator(SmoothedIndicator(cfg["z"], cfg["lambda"]))
    grid = np.arange(-10, 10 + cfg["step"] / 2, cfg["step"])
    maxima = bound_maxima(sol, grid)
    rng = np.random.default_rng(cfg["seed"])
    x = rng.uniform(-10, 10, cfg["trials"])
    t = rng.uniform(-5, 5, cfg["trials"])
    t[t == 0] = 1e-3
    smooth_ok = smoothness_bound_check(sol, x, t)
    ok = maxima["f"] <= 1 + 1e-6 and maxima["xf"] <= 1 + 1e-6 and maxima["fprime"] <= 1 + 1e-4 and smooth_ok
    payload = {
        "schema_version": 1,
        "kind": "stein_check",
        "z": cfg["z"], "lambda": cfg["lambda"], "nh": sol.nh,
        "max_abs_f": maxima["f"], "max_abs_xf": maxima["xf"], "max_abs_fprime": maxima["fprime"],
        "smoothness_trials": cfg["trials"], "smoothness_ok": smooth_ok,
        "pass": ok,
        "manifest": manifest("stein-check", cfg, started),
    }
    _emit(payload, cfg)
    return EXIT_OK if ok else EXIT_CHECK


def cmd_recursion(cfg: dict, started: float) -> int:
    weights = _floats(cfg["weights"]) if cfg["weights"] else [cfg["tau"]]
    res = recursion_bound(cfg["f"], cfg["tau"], [weights], _floats(cfg["a_init"]), cfg["horizon"])
    ok = bool(np.all(res.a <= res.b * (1 + 1e-12) + 1e-12))
    payload = {
        "schema_version": 1,
        "kind": "recursion",
        "f": cfg["f"], "tau": cfg["tau"], "weights": weights,
        "supremum": res.supremum, "c": res.c, "gamma": res.gamma, "alpha": res.alpha,
        "b": res.b.tolist(), "a": res.a.tolist(), "dominated": ok,
        "manifest": manifest("recursion", cfg, started),
    }
    _emit(payload, cfg)
    return EXIT_OK if ok else EXIT_CHECK


def cmd_ratios(cfg: dict, started: float) -> int:
    d = _single(_ints(cfg["d"]), "d")
    rows = ratio_convergence(cfg["b"], d, _ints(cfg["n"]), cfg["grid_size"])
    payload = {
        "schema_version": 1,
        "kind": "ratio_convergence",
        "b": cfg["b"], "d": d, "rows": rows,
        "manifest": manifest("ratios", cfg, started),
    }
    csv_text = "n,tau,delta,r,sigma2\n" + "".join(
        f"{r['n']},{r['tau']:.17g},{r['delta']:.17g},{r['r']:.17g},{r['sigma2']:.17g}\n" for r in rows
    )
    _emit(payload, cfg, csv_text)
    return EXIT_OK


COMMANDS = {
    "enumerate": cmd_enumerate,
    "simulate": cmd_simulate,
    "rate": cmd_rate,
    "audit": cmd_audit,
    "stein-check": cmd_stein_check,
    "recursion": cmd_recursion,
    "ratios": cmd_ratios,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON or key=value file")
    common.add_argument("--n", help="vertex count(s), comma separated")
    common.add_argument("--theta", help="connectivity parameter(s), comma separated")
    common.add_argument("--d", help="target degree(s), comma separated")
    common.add_argument("--b", type=float, help="cap on theta")
    common.add_argument("--samples", type=int, help="draws per cell")
    common.add_argument("--seed", type=int, help="master seed")
    common.add_argument("--threads", type=int, help="worker threads")
    common.add_argument("--out", help="output path stem; writes .json (and .csv where tabular)")
    common.add_argument("--format", choices=("csv", "json"), help="stdout format")

    parser = argparse.ArgumentParser(prog="degstein", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enumerate", parents=[common], help="exact law of Y_n by enumeration (n <= 7)")
    p.add_argument("--rational", action="store_const", const=True, help="exact rational arithmetic")
    sub.add_parser("simulate", parents=[common], help="coupled Monte Carlo draws at one cell")
    sub.add_parser("rate", parents=[common], help="Kolmogorov distance vs n sweep")
    sub.add_parser("audit", parents=[common], help="coupling condition audit")
    p = sub.add_parser("stein-check", parents=[common], help="numeric check of Stein solution bounds")
    p.add_argument("--z", type=float)
    p.add_argument("--lambda", dest="lambda", type=float)
    p.add_argument("--step", type=float, help="grid spacing on [-10, 10]")
    p.add_argument("--trials", type=int, help="randomised smoothness trials")
    p = sub.add_parser("recursion", parents=[common], help="dominating sequence of the inductive recursion")
    p.add_argument("--f", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--weights", help="weight row p_{n,0..L}, comma separated (default: tau at lag 0)")
    p.add_argument("--a-init", dest="a_init", help="initial values a_0..a_n1")
    p.add_argument("--horizon", type=int)
    p = sub.add_parser("ratios", parents=[common], help="uniform convergence of moment ratios")
    p.add_argument("--grid-size", dest="grid_size", type=int)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    started = time.perf_counter()
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](cfg, started)
    except (DomainError, UsageError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
