"""KL divergence between sampler output law and Gibbs measure.

Three routes are kept side by side: the direct leafwise sum, the
block free-energy decomposition, and the disorder-averaged difference of
free energies.  Agreement between them is the main internal correctness
check of the whole artifact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .covariance import CovarianceSpec, brw_f, gap_G, slope_range
from .field import (CremRealization, DenseTree, LeafDistribution, VertexId,
                    exact_gibbs, log_partition, log_sum_exp, materialize_tree)
from .rng import sub_seed
from .sampler import SamplerConfig, _block_boundaries, block_schedule, output_law_exact


def kl_divergence(P: LeafDistribution, Q: LeafDistribution) -> float:
    """Sum of P * (log P - log Q), accumulated largest-magnitude first."""
    if P.N != Q.N:
        raise ValueError("distributions live on different leaf sets")
    finite_p = P.log_weights > -np.inf
    if np.any(Q.log_weights[finite_p] == -np.inf):
        raise ValueError("Q does not dominate P")
    terms = np.exp(P.log_weights[finite_p]) * (
        P.log_weights[finite_p] - Q.log_weights[finite_p])
    terms = terms[np.argsort(-np.abs(terms), kind="stable")]
    total = float(np.sum(terms))
    if total < -1e-12:
        raise AssertionError(f"KL evaluated to {total}, below the clamp floor")
    return max(total, 0.0)


@dataclass
class KlReport:
    kl_direct: float
    kl_decomposed: float
    per_level_terms: list[tuple[int, float]]
    normalized: float
    log_z_full: float
    sum_block_log_z: float


def kl_decomposition(tree: DenseTree, cfg: SamplerConfig) -> KlReport:
    """Direct KL plus the block decomposition from intermediate marginals."""
    beta = cfg.beta
    mu = output_law_exact(tree, cfg)
    nu = exact_gibbs(tree, beta)
    direct = kl_divergence(mu, nu)

    log_z_full = float(log_sum_exp(beta * tree.leaf_values))
    lmu = np.zeros(1)  # log marginal of the sampler law at the current boundary
    weighted_sum = 0.0
    per_level = []
    for d0, m in _block_boundaries(cfg.N, cfg.M):
        roots = tree.level(d0)
        leaves = tree.level(d0 + m).reshape(1 << d0, 1 << m)
        shifted = beta * (leaves - roots[:, None])
        block_z = log_sum_exp(shifted, axis=1)
        term = float(np.sum(np.exp(lmu) * block_z))
        weighted_sum += term
        per_level.append((d0 // cfg.M, term))
        lmu = (lmu[:, None] + shifted - block_z[:, None]).ravel()
    decomposed = log_z_full - weighted_sum
    return KlReport(kl_direct=direct, kl_decomposed=decomposed,
                    per_level_terms=per_level, normalized=direct / cfg.N,
                    log_z_full=log_z_full, sum_block_log_z=weighted_sum)


@dataclass
class DisorderStats:
    mean: float
    stderr: float
    sample_sd: float
    n_realizations: int
    values: np.ndarray | None = field(default=None, repr=False)


def summarize(values: np.ndarray, keep: bool = False) -> DisorderStats:
    values = np.asarray(values, dtype=float)
    n = values.size
    sd = float(np.std(values, ddof=1)) if n > 1 else 0.0
    return DisorderStats(mean=float(np.mean(values)), stderr=sd / math.sqrt(n),
                         sample_sd=sd, n_realizations=n,
                         values=values if keep else None)


@dataclass
class ExpectedKl:
    """Two estimators of the disorder-averaged KL from the same realizations."""

    decomposed: DisorderStats
    free_energy_diff: DisorderStats


def _single_realization_kl(spec: CovarianceSpec, beta: float, M: int, N: int,
                           seed_r: int) -> tuple[float, float]:
    tree = materialize_tree(CremRealization(spec, N, seed_r))
    report = kl_decomposition(tree, SamplerConfig(beta=beta, M=M, N=N))
    # same-law estimator: blocks along the leftmost path
    alt = report.log_z_full
    for d0, m in _block_boundaries(N, M):
        alt -= log_partition(tree, VertexId(d0, 0), m, beta)
    return report.kl_decomposed, alt


def expected_kl(spec: CovarianceSpec, beta: float, M: int, N: int,
                n_realizations: int, seed: int, keep: bool = False) -> ExpectedKl:
    if n_realizations < 2:
        raise ValueError("need at least 2 realizations")
    primary = np.empty(n_realizations)
    alt = np.empty(n_realizations)
    for r in range(n_realizations):
        primary[r], alt[r] = _single_realization_kl(
            spec, beta, M, N, sub_seed(seed, "kl", r))
    return ExpectedKl(decomposed=summarize(primary, keep),
                      free_energy_diff=summarize(alt, keep))


def concentration_bound(beta: float, M: int, p: float) -> float:
    """Closed-form L^p concentration envelope beta * C_p / sqrt(M)."""
    if p < 1:
        raise ValueError("p must be >= 1")
    moment, _ = quad(lambda y: math.exp(-y * y / 2.0) * y ** (p - 1.0),
                     0.0, np.inf, epsabs=1e-12)
    c1 = 2.0 ** (p / 2.0 + 1.0) * p * moment
    return beta * math.sqrt(2.0) * c1 ** (1.0 / p) / math.sqrt(M)


def concentration_check(spec: CovarianceSpec, beta: float, N: int,
                        M_list: list[int], n_realizations: int,
                        seed: int) -> list[dict]:
    """Empirical L^1/L^2 deviations of KL/N against the closed-form bounds."""
    rows = []
    for M in M_list:
        vals = np.empty(n_realizations)
        for r in range(n_realizations):
            vals[r], _ = _single_realization_kl(
                spec, beta, M, N, sub_seed(seed, "conc", M, r))
        per_n = vals / N
        center = per_n.mean()
        dev1 = float(np.mean(np.abs(per_n - center)))
        dev2 = float(np.sqrt(np.mean((per_n - center) ** 2)))
        b1 = concentration_bound(beta, M, 1.0)
        b2 = concentration_bound(beta, M, 2.0)
        rows.append({"M": M, "mean_kl_per_n": float(center),
                     "dev_l1": dev1, "dev_l2": dev2,
                     "bound_l1": b1, "bound_l2": b2,
                     "violation": dev1 > b1 or dev2 > b2})
    return rows


def convergence_gap_check(spec: CovarianceSpec, beta: float, N_list: list[int],
                          epsilon: float, n_realizations: int, seed: int,
                          sandwich_eps: float = 0.05) -> list[dict]:
    """Mean KL/N along N against the limiting free-energy gap.

    Each row also carries per-block envelope diagnostics built from the
    essential inf/sup of the slope over the block's time window.
    """
    gap, gap_prime = gap_G(spec, beta)
    rows = []
    for N in N_list:
        M = block_schedule(N, epsilon)
        stats = expected_kl(spec, beta, M, N, n_realizations,
                            sub_seed(seed, "gap", N)).decomposed
        sandwich = []
        for d0, m in _block_boundaries(N, M):
            lo, hi = slope_range(spec, d0 / N, (d0 + m) / N)
            sandwich.append({
                "k": d0 // M,
                "a_minus": lo, "a_plus": hi,
                "f_lower": brw_f(beta * math.sqrt(lo)) - sandwich_eps * beta * math.sqrt(lo),
                "f_upper": brw_f(beta * math.sqrt(hi)) + sandwich_eps * beta * math.sqrt(hi),
            })
        rows.append({"N": N, "M": M, "mean_kl_per_n": stats.mean / N,
                     "stderr_per_n": stats.stderr / N, "gap": gap,
                     "gap_prime": gap_prime, "sandwich": sandwich})
    return rows
