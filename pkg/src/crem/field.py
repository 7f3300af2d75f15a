"""Disorder realizations on the binary tree.

A realization is never stored: the Gaussian increment into any vertex is
recomputed on demand from (seed, vertex code) via the counter-based generator
in :mod:`crem.rng`.  Small trees can additionally be materialized into a flat
array for exact partition-function and Gibbs-measure work.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .covariance import CovarianceSpec, evaluate_A

DENSE_CAP_DEFAULT = 24
DENSE_CAP_HARD = 28

_M64 = 0xFFFFFFFFFFFFFFFF


def split_codes(base: int, count: int) -> tuple[np.ndarray, np.ndarray]:
    """Low/high uint64 words of codes base .. base+count-1.

    Heap codes exceed 64 bits below depth 63, so deep lazy trees address
    vertices through this two-word form.
    """
    base_lo = np.uint64(base & _M64)
    base_hi = np.uint64(base >> 64)
    idx = np.arange(count, dtype=np.uint64)
    with np.errstate(over="ignore"):
        lo = base_lo + idx
    hi = np.where(lo < base_lo, base_hi + np.uint64(1), base_hi)
    return lo, hi


def _split_code_list(codes: list[int]) -> tuple[np.ndarray, np.ndarray]:
    lo = np.array([c & _M64 for c in codes], dtype=np.uint64)
    hi = np.array([c >> 64 for c in codes], dtype=np.uint64)
    return lo, hi


class CapacityError(RuntimeError):
    pass


@dataclass(frozen=True)
class VertexId:
    """Tree vertex addressed by depth and left-to-right path bits."""

    depth: int
    path: int

    def __post_init__(self):
        if self.depth < 0 or not 0 <= self.path < (1 << self.depth):
            raise ValueError(f"invalid vertex ({self.depth}, {self.path})")

    @staticmethod
    def root() -> "VertexId":
        return VertexId(0, 0)

    def child(self, bit: int) -> "VertexId":
        return VertexId(self.depth + 1, (self.path << 1) | (bit & 1))

    def ancestor(self, n: int) -> "VertexId":
        if not 0 <= n <= self.depth:
            raise ValueError(f"no ancestor of {self} at depth {n}")
        return VertexId(n, self.path >> (self.depth - n))

    def descend(self, rel_depth: int, rel_path: int) -> "VertexId":
        return VertexId(self.depth + rel_depth, (self.path << rel_depth) | rel_path)

    @property
    def code(self) -> int:
        """Heap code (1 << depth) | path, unique across all depths."""
        return (1 << self.depth) | self.path

    @property
    def path_hex(self) -> str:
        return f"{self.depth}:{self.path:x}"


def increment_std(spec: CovarianceSpec, N: int, k: int) -> float:
    """Standard deviation of the edge increment into depth k of an N-tree."""
    if not 1 <= k <= N:
        raise ValueError(f"level k={k} outside [1, {N}]")
    var = N * (evaluate_A(spec, k / N) - evaluate_A(spec, (k - 1) / N))
    return math.sqrt(max(var, 0.0))


class CremRealization:
    """A lazily evaluated disorder sample, immutable after construction."""

    def __init__(self, spec: CovarianceSpec, N: int, seed: int):
        if N < 1:
            raise ValueError("N must be >= 1")
        self.spec = spec
        self.N = N
        self.seed = seed
        self._sw = rng.seed_word(seed)
        self.sigmas = np.array([increment_std(spec, N, k) for k in range(1, N + 1)])

    def edge_increment(self, v: VertexId) -> float:
        if not 1 <= v.depth <= self.N:
            raise ValueError("the root has no incoming edge")
        g = rng.gaussians_for_split_codes(self._sw, *_split_code_list([v.code]))
        return float(self.sigmas[v.depth - 1] * g[0])

    def field_value(self, v: VertexId) -> float:
        if v.depth > self.N:
            raise ValueError(f"vertex depth {v.depth} exceeds N={self.N}")
        if v.depth == 0:
            return 0.0
        codes = [(1 << d) | (v.path >> (v.depth - d))
                 for d in range(1, v.depth + 1)]
        g = rng.gaussians_for_split_codes(self._sw, *_split_code_list(codes))
        return float(np.dot(self.sigmas[:v.depth], g))

    def subtree_leaf_values(self, v: VertexId, m: int) -> np.ndarray:
        """Recentred field at the 2^m depth-m descendants of v, in path order."""
        if v.depth + m > self.N:
            raise ValueError("subtree exceeds tree depth")
        acc = np.zeros(1)
        for j in range(1, m + 1):
            d = v.depth + j
            lo, hi = split_codes((1 << d) | (v.path << j), 1 << j)
            g = rng.gaussians_for_split_codes(self._sw, lo, hi)
            acc = np.repeat(acc, 2) + self.sigmas[d - 1] * g
        return acc

    def subtree_levels(self, v: VertexId, m: int) -> list[np.ndarray]:
        """Recentred field on every level 0..m below v (level j has 2^j values)."""
        if v.depth + m > self.N:
            raise ValueError("subtree exceeds tree depth")
        levels = [np.zeros(1)]
        for j in range(1, m + 1):
            d = v.depth + j
            lo, hi = split_codes((1 << d) | (v.path << j), 1 << j)
            g = rng.gaussians_for_split_codes(self._sw, lo, hi)
            levels.append(np.repeat(levels[-1], 2) + self.sigmas[d - 1] * g)
        return levels


class DenseTree:
    """Fully materialized field, breadth-first in a flat array."""

    def __init__(self, realization: CremRealization, values: np.ndarray):
        self.spec = realization.spec
        self.N = realization.N
        self.seed = realization.seed
        self.values = values

    def level(self, d: int) -> np.ndarray:
        return self.values[(1 << d) - 1:(2 << d) - 1]

    @property
    def leaf_values(self) -> np.ndarray:
        return self.level(self.N)

    def value_of(self, v: VertexId) -> float:
        return float(self.values[(1 << v.depth) - 1 + v.path])


def materialize_tree(realization: CremRealization,
                     dense_cap: int = DENSE_CAP_DEFAULT) -> DenseTree:
    N = realization.N
    cap = min(dense_cap, DENSE_CAP_HARD)
    if N > cap:
        need = (2 << N) * 8 / 2 ** 20
        raise CapacityError(
            f"N={N} exceeds dense cap {cap} (would need ~{need:.0f} MiB)")
    values = np.empty((2 << N) - 1)
    values[0] = 0.0
    prev = values[0:1]
    for d in range(1, N + 1):
        codes = np.uint64(1 << d) + np.arange(1 << d, dtype=np.uint64)
        g = rng.gaussians_for_codes(realization._sw, codes)
        cur = values[(1 << d) - 1:(2 << d) - 1]
        np.multiply(realization.sigmas[d - 1], g, out=cur)
        cur += np.repeat(prev, 2)
        prev = cur
    return DenseTree(realization, values)


def log_sum_exp(x: np.ndarray, axis=None) -> np.ndarray:
    if axis is None:
        m = float(np.max(x))
        return np.log(np.sum(np.exp(x - m))) + m
    m = np.max(x, axis=axis, keepdims=True)
    return np.log(np.sum(np.exp(x - m), axis=axis)) + np.squeeze(m, axis=axis)


@dataclass
class LeafDistribution:
    """Probability vector over the 2^N leaves, stored in log-space."""

    N: int
    log_weights: np.ndarray

    def __post_init__(self):
        if self.log_weights.shape != (1 << self.N,):
            raise ValueError("log_weights length must be 2^N")
        norm = float(log_sum_exp(self.log_weights))
        if abs(norm) > 1e-10:
            raise ValueError(f"log-weights not normalized (lse = {norm:.3e})")

    def probabilities(self) -> np.ndarray:
        return np.exp(self.log_weights)


def log_partition(tree: DenseTree, v: VertexId, M: int, beta: float) -> float:
    """log of the recentred partition sum over the depth-M subtree at v."""
    if M < 0 or v.depth + M > tree.N:
        raise ValueError("subtree exceeds tree depth")
    if M == 0:
        return 0.0
    lvl = tree.level(v.depth + M)
    seg = lvl[v.path << M:(v.path + 1) << M]
    return float(log_sum_exp(beta * (seg - tree.value_of(v))))


def exact_gibbs(tree: DenseTree, beta: float) -> LeafDistribution:
    if beta < 0.0:
        raise ValueError("beta must be nonnegative")
    lw = beta * tree.leaf_values
    lw -= log_sum_exp(lw)
    return LeafDistribution(tree.N, lw)


def gibbs_sample(tree: DenseTree, beta: float,
                 rng_stream: np.random.Generator) -> VertexId:
    """Inverse-CDF draw from the exact leaf Gibbs measure."""
    probs = exact_gibbs(tree, beta).probabilities()
    cdf = np.cumsum(probs)
    idx = int(np.searchsorted(cdf, rng_stream.random(), side="right"))
    return VertexId(tree.N, min(idx, (1 << tree.N) - 1))
