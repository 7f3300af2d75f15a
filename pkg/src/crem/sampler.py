"""Recursive block sampling on the renormalized tree.

The sampler descends from the root in blocks of depth M, drawing each block
leaf from the exact local Gibbs measure of that block, so memory is O(2^M)
regardless of N.  The exact output law over all leaves is also available for
dense trees, both in the closed product form and through the level-by-level
recursion, which must agree.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .field import (CremRealization, DenseTree, LeafDistribution, VertexId,
                    log_sum_exp)


@dataclass(frozen=True)
class SamplerConfig:
    beta: float
    M: int
    N: int

    def __post_init__(self):
        if not 1 <= self.M <= self.N:
            raise ValueError(f"need 1 <= M <= N, got M={self.M}, N={self.N}")
        if self.beta < 0.0:
            raise ValueError("beta must be nonnegative")


@dataclass
class SampleTrace:
    """One sampler run: output leaf plus query accounting.

    ``queries`` counts every distinct vertex whose field value was evaluated
    (block internals included); ``leaf_queries`` counts block-leaf evaluations
    only and is the counter bounded by ceil(N/M) * 2^M.
    """

    leaf: VertexId
    queries: int
    leaf_queries: int
    block_choices: list[VertexId] = field(default_factory=list)


def block_schedule(N: int, epsilon: float) -> int:
    """Block depth floor(eps * log2 N) capped at N, floored at 1."""
    if epsilon <= 0.0:
        raise ValueError("epsilon must be positive")
    if N < 1:
        raise ValueError("N must be >= 1")
    return max(1, min(int(np.floor(epsilon * np.log2(N))), N))


def query_budget(N: int, M: int) -> int:
    if not 1 <= M <= N:
        raise ValueError("need 1 <= M <= N")
    return -(N // -M) * (1 << M)


def block_log_gibbs(real: CremRealization, v: VertexId, m: int,
                    beta: float) -> np.ndarray:
    """Log-probabilities of the 2^m block leaves below v."""
    lw = beta * real.subtree_leaf_values(v, m)
    return lw - log_sum_exp(lw)


def sample_path(real: CremRealization, cfg: SamplerConfig,
                rng_stream: np.random.Generator,
                cache: dict | None = None) -> SampleTrace:
    """Run the block sampler once against a lazy realization.

    ``cache`` may be a dict reused across calls on the same realization to
    memoize block leaf log-probabilities keyed by block root code.
    """
    if cfg.N != real.N:
        raise ValueError("config N does not match realization")
    v = VertexId.root()
    queries = 0
    leaf_queries = 0
    choices: list[VertexId] = []
    while v.depth < cfg.N:
        m = min(cfg.M, cfg.N - v.depth)
        if cache is not None and v.code in cache:
            logp = cache[v.code]
        else:
            logp = block_log_gibbs(real, v, m, cfg.beta)
            if cache is not None:
                cache[v.code] = logp
        queries += (2 << m) - 2
        leaf_queries += 1 << m
        cdf = np.cumsum(np.exp(logp))
        idx = int(np.searchsorted(cdf, rng_stream.random(), side="right"))
        idx = min(idx, (1 << m) - 1)
        v = v.descend(m, idx)
        choices.append(v)
    return SampleTrace(leaf=v, queries=queries, leaf_queries=leaf_queries,
                       block_choices=choices)


def _block_boundaries(N: int, M: int) -> list[tuple[int, int]]:
    """(start depth, block depth) pairs covering 0..N in steps of M."""
    out = []
    for k in range(N // M + 1):
        m = min(M, N - k * M)
        if m > 0:
            out.append((k * M, m))
    return out


def output_law_exact(tree: DenseTree, cfg: SamplerConfig) -> LeafDistribution:
    """Closed-form sampler output law: exp(beta*X_u) over the block-Z product."""
    if cfg.N != tree.N:
        raise ValueError("config N does not match tree")
    beta = cfg.beta
    lw = beta * tree.leaf_values.copy()
    for d0, m in _block_boundaries(cfg.N, cfg.M):
        roots = tree.level(d0)
        leaves = tree.level(d0 + m).reshape(1 << d0, 1 << m)
        block_z = log_sum_exp(beta * (leaves - roots[:, None]), axis=1)
        lw -= np.repeat(block_z, 1 << (cfg.N - d0))
    return LeafDistribution(cfg.N, lw)


def output_law_recursive(tree: DenseTree, cfg: SamplerConfig) -> LeafDistribution:
    """Same law built by chaining block Gibbs weights level by level."""
    if cfg.N != tree.N:
        raise ValueError("config N does not match tree")
    beta = cfg.beta
    lmu = np.zeros(1)
    for d0, m in _block_boundaries(cfg.N, cfg.M):
        roots = tree.level(d0)
        leaves = tree.level(d0 + m).reshape(1 << d0, 1 << m)
        shifted = beta * (leaves - roots[:, None])
        block_log_p = shifted - log_sum_exp(shifted, axis=1)[:, None]
        lmu = (lmu[:, None] + block_log_p).ravel()
    return LeafDistribution(cfg.N, lmu)
