"""Command line experiment runner.

Every subcommand resolves to an ExperimentConfig, fans grid points out over
a worker pool, and writes a CSV (or JSON) report whose bytes depend only on
the config and seed, never on worker count or wall clock.  Timing and
environment go to a separate .manifest.json next to the report.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from itertools import product
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, config_from_mapping, parse_config
from .covariance import (LOG2, block_free_energy_Ftilde, free_energy_F,
                         gap_G, ground_state_levels, hardness_threshold,
                         t_zero)
from .field import DENSE_CAP_DEFAULT, CremRealization, materialize_tree
from .hardness import (RecursiveSamplerAlgorithm, SteepParams,
                       chain_steep_probability, run_instrumented,
                       select_steep_params, steep_gibbs_mass)
from .kl import expected_kl
from .plots import emit_plot
from .rng import parse_seed, sub_seed
from .sampler import SamplerConfig, block_schedule, query_budget, sample_path
from .brw import brw_suite, g_transform
from .covariance import brw_f


def resolve_workers(requested: int) -> int:
    if requested > 0:
        return requested
    env = os.environ.get("CREM_WORKERS")
    if env:
        return max(1, int(env))
    return min(os.cpu_count() or 1, 8)


def parallel_map(fn, items: list, workers: int) -> list:
    """Map preserving input order; results are independent of worker count."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------- experiments

def _thermo_rows(cfg: ExperimentConfig, workers: int) -> list[dict]:
    spec = cfg.covariance_spec()
    b_g = hardness_threshold(spec)
    x_gse, x_star = ground_state_levels(spec)
    rows = []
    for beta in cfg.beta or (1.0,):
        g, gp = gap_G(spec, beta)
        rows.append({
            "beta": beta,
            "F": free_energy_F(spec, beta),
            "F_tilde": block_free_energy_Ftilde(spec, beta),
            "G": g, "G_prime": gp,
            "t0": t_zero(spec, beta),
            "beta_G": b_g, "x_GSE": x_gse, "x_star": x_star,
        })
    return rows


def _sample_rows(cfg: ExperimentConfig, workers: int) -> list[dict]:
    spec = cfg.covariance_spec()
    N = cfg.N[0]
    M = cfg.M[0] if cfg.M else block_schedule(N, cfg.epsilon)
    beta = cfg.beta[0] if cfg.beta else 1.0
    real = CremRealization(spec, N, sub_seed(cfg.seed, "sample-disorder", 0))
    stream = np.random.default_rng(sub_seed(cfg.seed, "sample-draws", 0))
    scfg = SamplerConfig(beta=beta, M=M, N=N)
    cache: dict = {}
    budget = query_budget(N, M)
    rows = []
    for t in range(cfg.trials):
        trace = sample_path(real, scfg, stream, cache=cache)
        rows.append({"draw": t, "leaf": trace.leaf.path_hex,
                     "queries": trace.queries,
                     "leaf_queries": trace.leaf_queries,
                     "leaf_budget": budget})
    return rows


def _kl_point(payload) -> dict:
    cfg, beta, N, M, point_seed = payload
    spec = cfg.covariance_spec()
    res = expected_kl(spec, beta, M, N, cfg.realizations, point_seed)
    gap, _ = gap_G(spec, beta)
    return {"beta": beta, "N": N, "M": M,
            "mean_kl": res.decomposed.mean,
            "stderr_kl": res.decomposed.stderr,
            "alt_mean_kl": res.free_energy_diff.mean,
            "alt_stderr_kl": res.free_energy_diff.stderr,
            "mean_kl_per_n": res.decomposed.mean / N,
            "gap": gap}


def _kl_rows(cfg: ExperimentConfig, workers: int) -> list[dict]:
    points = []
    for beta, N in product(cfg.beta, cfg.N):
        for M in cfg.M or (block_schedule(N, cfg.epsilon),):
            points.append((cfg, beta, N, M,
                           sub_seed(cfg.seed, "kl-point", len(points))))
    return parallel_map(_kl_point, points, workers)


def _kl_sweep_rows(cfg: ExperimentConfig, workers: int) -> list[dict]:
    spec_bg = hardness_threshold(cfg.covariance_spec())
    points = []
    for i, (beta, N) in enumerate(product(cfg.beta, cfg.N)):
        M = block_schedule(N, cfg.epsilon)
        points.append((cfg, beta, N, M, sub_seed(cfg.seed, "kl-sweep", i)))
    rows = parallel_map(_kl_point, points, workers)
    for r in rows:
        r["beta_G"] = spec_bg
    return rows


def _hardness_point(payload) -> dict:
    cfg, trial, z, K, margin = payload
    spec = cfg.covariance_spec()
    N, beta = cfg.N[0], cfg.beta[0]
    M = cfg.M[0] if cfg.M else block_schedule(N, cfg.epsilon)
    params = SteepParams(z=z, K=K, C=margin)
    real = CremRealization(spec, N, sub_seed(cfg.seed, "hardness-disorder", trial))
    run = run_instrumented(
        RecursiveSamplerAlgorithm(SamplerConfig(beta=beta, M=M, N=N)),
        real, params, budget=10 * query_budget(N, M) + 1,
        rng_stream=np.random.default_rng(sub_seed(cfg.seed, "hardness-alg", trial)))
    row = {"trial": trial,
           "tau": run.tau if run.tau is not None else "censored",
           "tau_prime": run.tau_prime if run.tau_prime is not None else "censored",
           "steep_mass": ""}
    if N <= DENSE_CAP_DEFAULT:
        tree = materialize_tree(real)
        row["steep_mass"] = steep_gibbs_mass(tree, beta, params)
    return row


def _hardness_rows(cfg: ExperimentConfig, workers: int) -> list[dict]:
    spec = cfg.covariance_spec()
    if cfg.z is not None and cfg.K is not None:
        params = SteepParams(z=cfg.z, K=cfg.K)
    else:
        params = select_steep_params(spec, cfg.beta[0])
    points = [(cfg, t, params.z, params.K, params.C)
              for t in range(cfg.trials)]
    return parallel_map(_hardness_point, points, workers)


def _steep_rate_point(payload) -> dict:
    cfg, i, N = payload
    spec = cfg.covariance_spec()
    params = SteepParams(z=cfg.z, K=cfg.K)
    est = chain_steep_probability(spec, params, cfg.K, N, cfg.trials,
                                  sub_seed(cfg.seed, "steep-rate", i))
    return {"N": N, "p_hat": est.p_hat, "wilson_lo": est.wilson_lo,
            "wilson_hi": est.wilson_hi, "successes": est.successes,
            "trials": est.trials,
            "bound_exp": math.exp(-(cfg.z * LOG2 / cfg.K) * N)}


def _steep_rate_rows(cfg: ExperimentConfig, workers: int) -> list[dict]:
    if cfg.z is None or cfg.K is None:
        raise ValueError("steep-rate requires explicit z and K")
    points = [(cfg, i, N) for i, N in enumerate(cfg.N)]
    return parallel_map(_steep_rate_point, points, workers)


def _brw_point(payload) -> list[dict]:
    cfg, i, M = payload
    rows = []
    for e in brw_suite(M, list(cfg.beta), cfg.trials,
                       sub_seed(cfg.seed, "brw", i)):
        rows.append({"M": M, "beta": e.beta, "f_hat": e.f_hat,
                     "stderr": e.stderr, "f_limit": brw_f(e.beta),
                     "g_hat": g_transform(e.f_hat, e.beta)})
    return rows


def _brw_rows(cfg: ExperimentConfig, workers: int) -> list[dict]:
    if not cfg.M:
        raise ValueError("brw requires an M grid")
    points = [(cfg, i, M) for i, M in enumerate(cfg.M)]
    nested = parallel_map(_brw_point, points, workers)
    return [row for rows in nested for row in rows]


_RUNNERS = {
    "thermo": _thermo_rows,
    "sample": _sample_rows,
    "kl": _kl_rows,
    "kl-sweep": _kl_sweep_rows,
    "hardness": _hardness_rows,
    "steep-rate": _steep_rate_rows,
    "brw": _brw_rows,
}


# ---------------------------------------------------------------- reporting

def rows_to_csv(rows: list[dict], manifest_line: dict) -> str:
    buf = io.StringIO()
    buf.write("# " + json.dumps(manifest_line, sort_keys=True) + "\n")
    if rows:
        writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()),
                                lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: _csv_cell(v) for k, v in r.items()})
    return buf.getvalue()


def _csv_cell(v):
    if isinstance(v, float):
        return repr(v)
    return v


def run_experiment(cfg: ExperimentConfig, out_dir: Path) -> Path:
    """Execute the configured experiment and write report + manifest."""
    workers = resolve_workers(cfg.workers)
    t0 = time.monotonic()
    rows = _RUNNERS[cfg.kind](cfg, workers)
    elapsed = time.monotonic() - t0
    out_dir.mkdir(parents=True, exist_ok=True)
    name = cfg.out or f"{cfg.kind}.{cfg.format}"
    out_path = out_dir / name
    head = {"config_hash": cfg.hash(), "kind": cfg.kind, "seed": cfg.seed,
            "version": __version__}
    if cfg.format == "csv":
        out_path.write_text(rows_to_csv(rows, head))
    else:
        out_path.write_text(json.dumps({"manifest": head, "rows": rows},
                                       indent=2, sort_keys=True) + "\n")
    manifest = {"config": cfg.as_dict(), "config_hash": cfg.hash(),
                "version": __version__, "wall_time_s": elapsed,
                "workers": workers, "report": str(out_path)}
    (out_dir / (out_path.name + ".manifest.json")).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out_path


# ---------------------------------------------------------------- arg parsing

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML or JSON config file")
    p.add_argument("--seed", type=parse_seed, help="64-bit seed (dec or 0x hex)")
    p.add_argument("--workers", type=int)
    p.add_argument("--out-dir", default=".")
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--out", help="report file name")
    p.add_argument("--spec", help="named profile, e.g. two-slope(0.5,1.5,0.5)")
    p.add_argument("--beta", help="comma-separated beta grid")
    p.add_argument("--N", help="comma-separated N grid")
    p.add_argument("--M", help="comma-separated block depth grid")
    p.add_argument("--M-list", dest="M", help=argparse.SUPPRESS)
    p.add_argument("--beta-grid", dest="beta", help=argparse.SUPPRESS)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--K", help="coarse block count, or 'auto'")
    p.add_argument("--z", help="steepness margin, or 'auto'")
    p.add_argument("--trials", type=int)
    p.add_argument("--realizations", type=int)
    p.add_argument("--max-queries", type=int, dest="max_queries")


def _merge_cli(args: argparse.Namespace, kind: str) -> ExperimentConfig:
    raw = {}
    if args.config:
        raw.update(json.loads(Path(args.config).read_text())
                   if args.config.endswith(".json")
                   else _toml_raw(args.config))
    raw["kind"] = kind
    if args.seed is not None:
        raw["seed"] = args.seed
    for key in ("workers", "format", "out", "epsilon", "trials",
                "realizations", "max_queries"):
        v = getattr(args, key, None)
        if v is not None:
            raw[key] = v
    if args.spec:
        raw["spec"] = args.spec
    for key, cast in (("beta", float), ("N", int), ("M", int)):
        v = getattr(args, key, None)
        if v is not None:
            raw[key] = [cast(x) for x in str(v).split(",")]
    for key, cast in (("K", int), ("z", float)):
        v = getattr(args, key, None)
        if v is not None and v != "auto":
            raw[key] = cast(v)
    return config_from_mapping(raw)


def _toml_raw(path: str) -> dict:
    from .config import tomllib
    return tomllib.loads(Path(path).read_text())


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="crem",
        description="Simulation and analysis toolkit for hierarchical "
                    "Gaussian energy landscapes")
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in _RUNNERS:
        p = sub.add_parser(kind)
        _add_common(p)
    pp = sub.add_parser("plot")
    pp.add_argument("--in", dest="infile", required=True)
    pp.add_argument("--kind", required=True)
    pp.add_argument("--out", required=True)
    args = parser.parse_args(argv)

    try:
        if args.command == "plot":
            rows = read_report_csv(Path(args.infile))
            Path(args.out).write_text(emit_plot(rows, args.kind))
            return 0
        cfg = _merge_cli(args, args.command)
        out = run_experiment(cfg, Path(args.out_dir))
        print(out)
        return 0
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def read_report_csv(path: Path) -> list[dict]:
    """Rows of a report CSV, skipping the manifest header line."""
    lines = path.read_text().splitlines()
    body = [ln for ln in lines if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(body))))


if __name__ == "__main__":
    raise SystemExit(main())
