"""Finite-depth branching random walk with standard Gaussian increments.

This is the reference system for all block free energies: a depth-M block of
a realization with constant slope a has the law of a BRW scaled by sqrt(a).
The suite estimates f_M(beta) = E[log Z_M(beta)] / M by Monte Carlo, checks
its monotone structure through the g transform, and produces the per-block
envelope used as a numerical sanity bound on measured block free energies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .covariance import IDENTITY, LOG2, CovarianceSpec, brw_f, slope_range
from .field import (CremRealization, VertexId, increment_std, log_sum_exp,
                    materialize_tree)
from .kl import summarize
from .rng import _GOLDEN, _U64, inv_norm_cdf, mix64, sub_seed, words_to_uniform

_M_CAP = 22
_MIN_TRIALS = 100
_CHUNK_ELEMS = 1 << 22


@dataclass(frozen=True)
class BrwEstimate:
    M: int
    beta: float
    f_hat: float
    stderr: float
    exact: bool = False

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be >= 1")
        if self.stderr < 0.0:
            raise ValueError("stderr must be nonnegative")


def _check_mc_args(M: int, trials: int) -> None:
    if not 1 <= M <= _M_CAP:
        raise ValueError(f"M must lie in [1, {_M_CAP}]")
    if trials < _MIN_TRIALS:
        raise ValueError(f"need at least {_MIN_TRIALS} trials")


def _trial_log_z(M: int, seed_t: int, betas: np.ndarray) -> np.ndarray:
    """log Z at every beta on the grid, from one shared disorder draw."""
    leaves = materialize_tree(CremRealization(IDENTITY, M, seed_t)).leaf_values
    return np.array([log_sum_exp(b * leaves) for b in betas])


def _batch_leaf_values(M: int, trial_seeds: np.ndarray) -> np.ndarray:
    """Depth-M walk leaf values for a batch of trials, one row per trial.

    Reproduces the per-trial stream of _trial_log_z exactly: row t equals the
    leaf values of CremRealization(IDENTITY, M, trial_seeds[t]).
    """
    sw = mix64(trial_seeds)
    x = np.zeros((trial_seeds.size, 1))
    for d in range(1, M + 1):
        codes = np.arange(1 << d, 2 << d, dtype=np.uint64)
        words = mix64(sw[:, None] ^ mix64(codes)[None, :])
        g = inv_norm_cdf(words_to_uniform(words))
        x = np.repeat(x, 2, axis=1) + increment_std(IDENTITY, M, d) * g
    return x


def _mc_log_z_per_level(M: int, betas: np.ndarray, trials: int,
                        seed: int) -> np.ndarray:
    """(trials, len(betas)) array of log Z / M, batched in memory-safe chunks."""
    base = _U64(sub_seed(seed, "brw", M))
    vals = np.empty((trials, betas.size))
    step = max(1, _CHUNK_ELEMS >> M)
    for lo in range(0, trials, step):
        t = np.arange(lo, min(lo + step, trials), dtype=np.uint64)
        trial_seeds = mix64(base ^ (t * _U64(_GOLDEN)))
        x = _batch_leaf_values(M, trial_seeds)
        for j, b in enumerate(betas):
            vals[lo:lo + t.size, j] = log_sum_exp(b * x, axis=1) / M
    return vals


def brw_free_energy(M: int, beta: float, trials: int, seed: int) -> BrwEstimate:
    """Monte Carlo estimate of the depth-M free energy per level."""
    _check_mc_args(M, trials)
    if beta < 0.0:
        raise ValueError("beta must be nonnegative")
    if beta == 0.0:
        return BrwEstimate(M=M, beta=0.0, f_hat=LOG2, stderr=0.0)
    vals = _mc_log_z_per_level(M, np.array([beta]), trials, seed)
    stats = summarize(vals[:, 0])
    return BrwEstimate(M=M, beta=beta, f_hat=stats.mean, stderr=stats.stderr)


def brw_suite(M: int, beta_grid: list[float], trials: int,
              seed: int) -> list[BrwEstimate]:
    """Estimates at every beta on the grid, sharing disorder across the grid."""
    _check_mc_args(M, trials)
    betas = np.asarray(beta_grid, dtype=float)
    if betas.size == 0 or np.any(betas < 0.0):
        raise ValueError("beta grid must be nonempty and nonnegative")
    vals = _mc_log_z_per_level(M, betas, trials, seed)
    out = []
    for j, b in enumerate(betas):
        if b == 0.0:
            out.append(BrwEstimate(M=M, beta=0.0, f_hat=LOG2, stderr=0.0))
        else:
            stats = summarize(vals[:, j])
            out.append(BrwEstimate(M=M, beta=float(b), f_hat=stats.mean,
                                   stderr=stats.stderr))
    return out


def f1_quadrature(beta: float, nodes: int = 80) -> BrwEstimate:
    """Depth-1 free energy E[log(e^{beta x} + e^{beta y})] by 2-D quadrature."""
    x, w = hermegauss(nodes)
    w = w / math.sqrt(2.0 * math.pi)
    lx = beta * x
    # log(e^a + e^b) evaluated stably on the tensor grid
    big = np.maximum(lx[:, None], lx[None, :])
    val = big + np.log1p(np.exp(-np.abs(lx[:, None] - lx[None, :])))
    f = float(w @ val @ w)
    return BrwEstimate(M=1, beta=beta, f_hat=f, stderr=0.0, exact=True)


def g_transform(f_value: float, beta: float) -> float:
    """g = f/beta - 2 log 2 / beta, extended by 0 at beta = 0."""
    if beta < 0.0:
        raise ValueError("beta must be nonnegative")
    if beta == 0.0:
        return 0.0
    return f_value / beta - 2.0 * LOG2 / beta


def verify_gM_properties(beta_grid: list[float], M_list: list[int],
                         trials: int, seed: int) -> dict:
    """Monte Carlo property report for the depth-M free energies.

    Checks, per depth M: the estimate stays below the limit f within noise,
    the g transform is non-decreasing along the grid within noise, and the
    worst-case relative error sup |f_hat - f| / beta shrinks as M grows.
    """
    if not beta_grid or not M_list:
        raise ValueError("grids must be nonempty")
    report = {"per_M": [], "upper_bound_ok": True, "g_monotone_ok": True,
              "uniform_error_decreasing": True}
    sup_errors = []
    for M in M_list:
        ests = brw_suite(M, beta_grid, trials, seed)
        rows = []
        sup_err = 0.0
        prev_g, prev_se = None, None
        ub_ok, mono_ok = True, True
        for e in ests:
            limit = brw_f(e.beta)
            if e.f_hat > limit + 3.0 * e.stderr:
                ub_ok = False
            g = g_transform(e.f_hat, e.beta)
            g_se = e.stderr / e.beta if e.beta > 0.0 else 0.0
            if prev_g is not None and g < prev_g - 3.0 * (g_se + prev_se):
                mono_ok = False
            if e.beta > 0.0:
                sup_err = max(sup_err, abs(e.f_hat - limit) / e.beta)
            rows.append({"beta": e.beta, "f_hat": e.f_hat, "stderr": e.stderr,
                         "f_limit": limit, "g_hat": g})
            prev_g, prev_se = g, g_se
        sup_errors.append(sup_err)
        report["per_M"].append({"M": M, "rows": rows, "sup_rel_error": sup_err,
                                "upper_bound_ok": ub_ok, "g_monotone_ok": mono_ok})
        report["upper_bound_ok"] &= ub_ok
        report["g_monotone_ok"] &= mono_ok
    for e0, e1 in zip(sup_errors, sup_errors[1:]):
        if e1 > e0:
            report["uniform_error_decreasing"] = False
    report["sup_errors"] = sup_errors
    return report


def calibrate_epsilon(M: int, trials: int, seed: int,
                      beta_grid: list[float] | None = None) -> float:
    """Empirical uniform-error envelope at depth M, used by sandwich_check."""
    if beta_grid is None:
        beta_grid = [0.25 * j for j in range(1, 13)]
    eps = 0.0
    for e in brw_suite(M, beta_grid, trials, seed):
        if e.beta > 0.0:
            eps = max(eps, abs(e.f_hat - brw_f(e.beta)) / e.beta
                      + 3.0 * e.stderr / e.beta)
    return eps


def sandwich_check(spec: CovarianceSpec, beta: float, N: int, M: int,
                   seed: int, trials: int) -> dict:
    """Measure block free energies against the per-block BRW envelope.

    Block k covers times [kM/N, (k+1)M/N]; with a ranging over the slope's
    essential inf/sup on that window, the block free energy must land in
    [f(beta sqrt(a-)) - eps beta sqrt(a-), f(beta sqrt(a+)) + eps beta sqrt(a+)]
    where eps is calibrated empirically at the same depth.
    """
    _check_mc_args(M, trials)
    if not 1 <= M <= N:
        raise ValueError("need 1 <= M <= N")
    eps = calibrate_epsilon(M, trials, sub_seed(seed, "eps", M))
    blocks = []
    all_ok = True
    for k in range(N // M):
        lo, hi = slope_range(spec, k * M / N, (k + 1) * M / N)
        vals = np.empty(trials)
        for t in range(trials):
            real = CremRealization(spec, N, sub_seed(seed, "sandwich", k, t))
            # the block at depth kM down the leftmost path; its law only
            # depends on the time window, so one representative suffices
            vals[t] = log_sum_exp(
                beta * real.subtree_leaf_values(VertexId(k * M, 0), M)) / M
        stats = summarize(vals)
        lower = brw_f(beta * math.sqrt(lo)) - eps * beta * math.sqrt(lo)
        upper = brw_f(beta * math.sqrt(hi)) + eps * beta * math.sqrt(hi)
        ok = (lower - 3.0 * stats.stderr <= stats.mean
              <= upper + 3.0 * stats.stderr)
        all_ok &= ok
        blocks.append({"k": k, "a_minus": lo, "a_plus": hi,
                       "f_hat": stats.mean, "stderr": stats.stderr,
                       "lower": lower, "upper": upper, "ok": ok})
    return {"beta": beta, "N": N, "M": M, "epsilon": eps,
            "blocks": blocks, "all_ok": all_ok}
