"""Steep ancestors, chains of subtrees, and query instrumentation.

In the supercritical regime the Gibbs measure concentrates on leaves having
an ancestor whose coarse block increment is anomalously large ("steep"),
while such increments are exponentially rare along the chain of blocks any
single query reveals.  This module provides the parameter selection, the
exact steep Gibbs mass on dense trees, Monte Carlo rate estimation on deep
lazy trees, and a harness that drives arbitrary query algorithms while
watching for the first steep discovery.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from . import _kernels, rng
from .covariance import (LOG2, CovarianceSpec, brw_f, evaluate_A,
                         free_energy_F, hardness_threshold, slope_range)
from .field import (CremRealization, DenseTree, VertexId, exact_gibbs,
                    increment_std, log_sum_exp)
from .rng import sub_seed
from .sampler import SamplerConfig

_BLOCK_DEPTH_CAP = 22
_DEFAULT_Z_GRID = (0.5, 0.2, 0.1, 0.05, 0.02, 0.01, 0.005)
_DEFAULT_K_GRID = (2, 4, 8, 16, 32, 64, 128, 256)


@dataclass(frozen=True)
class SteepParams:
    z: float
    K: int
    C: float = math.nan

    def __post_init__(self):
        if self.z <= 0.0:
            raise ValueError("z must be positive")
        if self.K < 1:
            raise ValueError("K must be >= 1")


def block_increment_mean_a(spec: CovarianceSpec, K: int, k: int) -> float:
    """Mean-square slope a_k = (A(k/K) - A((k-1)/K)) / K of coarse block k."""
    if not 1 <= k <= K:
        raise ValueError(f"block index k={k} outside [1, {K}]")
    return (evaluate_A(spec, k / K) - evaluate_A(spec, (k - 1) / K)) / K


def steep_threshold(spec: CovarianceSpec, z: float, K: int, N: int,
                    k: int) -> float:
    """Increment level N*sqrt(2 log 2 (1+z) a_k) defining steepness."""
    return N * math.sqrt(2.0 * LOG2 * (1.0 + z) * block_increment_mean_a(spec, K, k))


def has_steep_ancestor(field_at: Callable[[VertexId], float], v: VertexId,
                       params: SteepParams, N: int,
                       spec: CovarianceSpec) -> bool:
    """Does any complete coarse block increment along v's path exceed its
    threshold?  Only the floor(|v| K / N) fully revealed blocks are tested."""
    if v.depth < 1:
        raise ValueError("the root has no ancestors to test")
    K = params.K
    prev = field_at(v.ancestor(0))
    for k in range(1, (v.depth * K) // N + 1):
        cur = field_at(v.ancestor((N * k) // K))
        if cur - prev > steep_threshold(spec, params.z, K, N, k):
            return True
        prev = cur
    return False


@dataclass(frozen=True)
class ChainSpec:
    """The stack of block subtrees tiling the ancestor path of a vertex."""

    anchor: VertexId
    blocks: tuple[tuple[VertexId, int], ...]


def chain_of_subtrees(v: VertexId, N: int, K: int) -> ChainSpec:
    """Blocks rooted at v's ancestors at depths floor(Nk/K), truncated at |v|."""
    if v.depth > N:
        raise ValueError("vertex deeper than the tree")
    blocks = []
    k = 0
    while k == 0 or (N * k) // K < v.depth:
        d0 = (N * k) // K
        depth = min((N * (k + 1)) // K, v.depth) - d0
        if depth > 0 or v.depth == 0:
            blocks.append((v.ancestor(d0), depth))
        k += 1
    return ChainSpec(anchor=v, blocks=tuple(blocks))


def select_steep_params(spec: CovarianceSpec, beta: float,
                        z_grid: tuple[float, ...] | None = None,
                        K_grid: tuple[int, ...] | None = None) -> SteepParams:
    """Search (z, K) for a certified positive margin C.

    C = F(beta) - (1+z)/K * sum_k max over the k-th coarse cell of
    f(beta sqrt(a(s))); the per-cell max is exact for piecewise-constant a.
    Largest z is tried first, then smallest K.
    """
    b_g = hardness_threshold(spec)
    if not beta > b_g:
        raise ValueError(
            f"beta={beta} is not above the hardness threshold ({b_g})")
    free = free_energy_F(spec, beta)
    for z in z_grid or _DEFAULT_Z_GRID:
        for K in K_grid or _DEFAULT_K_GRID:
            block_sum = sum(
                brw_f(beta * math.sqrt(slope_range(spec, (k - 1) / K, k / K)[1]))
                for k in range(1, K + 1)) / K
            margin = free - (1.0 + z) * block_sum
            if margin > 0.0:
                return SteepParams(z=z, K=K, C=margin)
    raise ValueError("no certified parameters on the search grid")


def steep_gibbs_mass(tree: DenseTree, beta: float, params: SteepParams,
                     K: int | None = None) -> float:
    """Exact Gibbs mass of the leaves having a steep ancestor."""
    K = params.K if K is None else K
    N = tree.N
    probs = exact_gibbs(tree, beta).probabilities()
    steep = np.zeros(1 << N, dtype=bool)
    for k in range(1, K + 1):
        d0, d1 = (N * (k - 1)) // K, (N * k) // K
        if d1 == d0:
            continue
        inc = (np.repeat(tree.level(d1), 1 << (N - d1))
               - np.repeat(tree.level(d0), 1 << (N - d0)))
        steep |= inc > steep_threshold(tree.spec, params.z, K, N, k)
    return float(probs[steep].sum())


class QueryAlgorithm(Protocol):
    """Sequential query strategy against an unknown field.

    ``step`` receives the full query history (vertex, field value) and one
    fresh uniform variate, and returns the next vertex to query together
    with a flag marking it as the final output (which must be a leaf).
    """

    def step(self, history: list[tuple[VertexId, float]],
             u: float) -> tuple[VertexId, bool]: ...


@dataclass
class InstrumentedRun:
    """Outcome of one instrumented run; None values mean budget-censored."""

    tau: int | None
    tau_prime: int | None
    output: VertexId | None
    queries: int


def _block_sigmas(real: CremRealization, d0: int, depth: int) -> np.ndarray:
    return real.sigmas[d0:d0 + depth]


def _chain_is_steep(real: CremRealization, v: VertexId, params: SteepParams,
                    cache: dict[int, bool]) -> bool:
    """Scan the chain of v for any vertex with a steep ancestor.

    Complete blocks reduce to one exceedance test over their leaf sums:
    every path increment ending at a block boundary is dominated by that
    block's leaf max, and truncated final blocks reveal no complete
    increment.  The block structure is fixed, so each root determines its
    threshold and the per-root indicator can be cached.
    """
    N, K = real.N, params.K
    k = 0
    while k == 0 or (N * k) // K < v.depth:
        d0, d1 = (N * k) // K, (N * (k + 1)) // K
        if d1 > v.depth:
            break
        if d1 == d0:
            k += 1
            continue
        root = v.ancestor(d0)
        if root.code not in cache:
            cache[root.code] = _kernels.block_exceeds(
                real._sw, root.code, d1 - d0, _block_sigmas(real, d0, d1 - d0),
                steep_threshold(real.spec, params.z, K, N, k + 1))
        if cache[root.code]:
            return True
        k += 1
    return False


def run_instrumented(algorithm: QueryAlgorithm, real: CremRealization,
                     params: SteepParams, K: int | None = None,
                     budget: int = 10 ** 7,
                     rng_stream: np.random.Generator | None = None) -> InstrumentedRun:
    """Drive an algorithm step by step, recording tau and tau-prime.

    After each query the chain of the queried vertex is scanned for steep
    vertices; per-block scan results are cached by block root so repeated
    chains are never rescanned.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    if K is not None and K != params.K:
        raise ValueError("K must match params.K")
    if rng_stream is None:
        rng_stream = np.random.default_rng(sub_seed(real.seed, "instrumented"))
    history: list[tuple[VertexId, float]] = []
    cache: dict[int, bool] = {}
    tau_prime = None
    for n in range(1, budget + 1):
        v, is_output = algorithm.step(history, float(rng_stream.random()))
        if v.depth > real.N:
            raise ValueError(f"algorithm queried out-of-tree vertex {v}")
        history.append((v, real.field_value(v)))
        if tau_prime is None and _chain_is_steep(real, v, params, cache):
            tau_prime = n
        if is_output:
            if v.depth != real.N:
                raise ValueError("output vertex must be a leaf")
            return InstrumentedRun(tau=n, tau_prime=tau_prime, output=v,
                                   queries=n)
    return InstrumentedRun(tau=None, tau_prime=tau_prime, output=None,
                           queries=budget)


def wilson_interval(successes: int, trials: int,
                    z: float = 1.96) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion."""
    if trials < 1 or not 0 <= successes <= trials:
        raise ValueError("invalid counts")
    p = successes / trials
    denom = 1.0 + z * z / trials
    center = (p + z * z / (2 * trials)) / denom
    half = (z / denom) * math.sqrt(p * (1 - p) / trials
                                   + z * z / (4 * trials * trials))
    return max(0.0, center - half), min(1.0, center + half)


@dataclass(frozen=True)
class SteepProbability:
    N: int
    p_hat: float
    wilson_lo: float
    wilson_hi: float
    successes: int
    trials: int


def chain_steep_probability(spec: CovarianceSpec, params: SteepParams,
                            K: int | None, N: int, trials: int,
                            seed: int) -> SteepProbability:
    """Monte Carlo probability that a fixed deep leaf's chain is steep.

    Uses lazy disorder, so N is limited only by the per-block leaf count
    (N/K <= 22); cost per trial is O(K * 2^(N/K)).
    """
    K = params.K if K is None else K
    if K != params.K:
        raise ValueError("K must match params.K")
    if trials < 100:
        raise ValueError("need at least 100 trials")
    boundaries = [(N * k) // K for k in range(K + 1)]
    depths = [d1 - d0 for d0, d1 in zip(boundaries, boundaries[1:]) if d1 > d0]
    if max(depths) > _BLOCK_DEPTH_CAP:
        raise ValueError(f"block depth {max(depths)} exceeds cap "
                         f"{_BLOCK_DEPTH_CAP}; increase K")
    sigma_levels = np.array([increment_std(spec, N, d)
                             for d in range(1, N + 1)])
    m_max = max(depths)
    root_codes, sigmas, thresholds = [], [], []
    k_idx = 1
    for d0, d1 in zip(boundaries, boundaries[1:]):
        if d1 == d0:
            k_idx += 1
            continue
        root_codes.append(1 << d0)  # leftmost path anchor
        row = np.zeros(m_max)
        row[:d1 - d0] = sigma_levels[d0:d1]
        sigmas.append(row)
        thresholds.append(steep_threshold(spec, params.z, K, N, k_idx))
        k_idx += 1
    seed_words = np.array(
        [rng.seed_word(sub_seed(seed, "rate", t)) for t in range(trials)],
        dtype=np.uint64)
    hits = _kernels.chain_hits(seed_words, root_codes,
                               np.array(depths), np.vstack(sigmas),
                               np.array(thresholds))
    successes = int(hits.sum())
    lo, hi = wilson_interval(successes, trials)
    return SteepProbability(N=N, p_hat=successes / trials, wilson_lo=lo,
                            wilson_hi=hi, successes=successes, trials=trials)


class UniformLeafSearch:
    """Queries a fresh uniform leaf per step, outputting at the last step."""

    def __init__(self, N: int, n_queries: int):
        if N > 120:
            raise ValueError("leaf derivation supports N <= 120")
        self.N = N
        self.n_queries = n_queries

    def step(self, history, u):
        h1 = rng.mix64_int(int(u * 2.0 ** 53))
        h2 = rng.mix64_int(h1)
        path = ((h1 << 56) | (h2 >> 8)) >> (120 - self.N)
        return VertexId(self.N, path), len(history) + 1 >= self.n_queries


class RecursiveSamplerAlgorithm:
    """Block descent sampling phrased through the query interface.

    Each block's leaves are queried one per step; once all are in the
    history the step's uniform variate selects the next block root from the
    local Gibbs weights.
    """

    def __init__(self, cfg: SamplerConfig):
        self.cfg = cfg
        self._block = self._leaves_of(VertexId.root())
        self._next = 0

    def _leaves_of(self, root: VertexId) -> list[VertexId]:
        m = min(self.cfg.M, self.cfg.N - root.depth)
        return [root.descend(m, q) for q in range(1 << m)]

    def step(self, history, u):
        if self._next < len(self._block):
            v = self._block[self._next]
            self._next += 1
            return v, False
        vals = np.array([x for _, x in history[-len(self._block):]])
        lw = self.cfg.beta * vals
        cdf = np.cumsum(np.exp(lw - log_sum_exp(lw)))
        idx = min(int(np.searchsorted(cdf, u, side="right")), len(cdf) - 1)
        chosen = self._block[idx]
        if chosen.depth == self.cfg.N:
            return chosen, True
        self._block = self._leaves_of(chosen)
        self._next = 1
        return self._block[0], False


def tau_prime_survival(spec: CovarianceSpec, params: SteepParams, N: int,
                       runs: int, max_queries: int, seed: int,
                       n_grid: list[int] | None = None) -> dict:
    """Empirical survival P(tau' > n) for the uniform fresh-leaf searcher."""
    if n_grid is None:
        n_grid = list(range(5, max_queries + 1, 5))
    taus = np.full(runs, np.inf)
    for r in range(runs):
        real = CremRealization(spec, N, sub_seed(seed, "survival", r))
        alg = UniformLeafSearch(N, max_queries)
        out = run_instrumented(
            alg, real, params, budget=max_queries,
            rng_stream=np.random.default_rng(sub_seed(seed, "alg", r)))
        if out.tau_prime is not None:
            taus[r] = out.tau_prime
    survival = [(n, float(np.mean(taus > n))) for n in n_grid]
    return {"N": N, "runs": runs, "max_queries": max_queries,
            "survival": survival, "tau_primes": taus}
