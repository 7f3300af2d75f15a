"""Counter-based randomness.

Every Gaussian edge increment of a disorder realization is a pure function of
(seed, vertex code), so the same environment is seen no matter in which order
vertices are queried, and independent workers can evaluate disjoint parts of
the tree without sharing state.

Pipeline: a 64-bit mix (splitmix64 finalizer) of the seed word and the vertex
code gives a uniform word, which is pushed through an in-repo rational
approximation of the inverse normal CDF (Acklam's coefficients, max relative
error ~1.15e-9).  No platform math library is involved beyond IEEE double
arithmetic, so results are bit-identical across machines.
"""

from __future__ import annotations

import numpy as np

_U64 = np.uint64
_MASK64 = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15
_MIX_M1 = 0xBF58476D1CE4E5B9
_MIX_M2 = 0x94D049BB133111EB

# Acklam's rational approximation of the standard normal quantile function.
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425
_P_HIGH = 1.0 - _P_LOW


def mix64_int(x: int) -> int:
    """Scalar splitmix64-style finalizer on python ints (mod 2^64)."""
    z = (x + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * _MIX_M1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX_M2) & _MASK64
    return z ^ (z >> 31)


def mix64(x: np.ndarray) -> np.ndarray:
    """Vectorized counterpart of mix64_int on uint64 arrays."""
    x = np.asarray(x, dtype=_U64)
    with np.errstate(over="ignore"):
        z = x + _U64(_GOLDEN)
        z = (z ^ (z >> _U64(30))) * _U64(_MIX_M1)
        z = (z ^ (z >> _U64(27))) * _U64(_MIX_M2)
        return z ^ (z >> _U64(31))


def words_to_uniform(words: np.ndarray) -> np.ndarray:
    """Map 64-bit words to doubles strictly inside (0, 1).

    The top word would round to exactly 1.0 under the +0.5 midpoint map, so
    it is clamped to the largest double below 1.
    """
    u = ((np.asarray(words, dtype=_U64) >> _U64(11)).astype(np.float64)
         + 0.5) * 2.0 ** -53
    return np.minimum(u, 1.0 - 2.0 ** -53)


def inv_norm_cdf(p: np.ndarray) -> np.ndarray:
    """Standard normal quantile, vectorized, for p strictly in (0, 1)."""
    p = np.asarray(p, dtype=np.float64)
    x = np.empty_like(p)

    lo = p < _P_LOW
    hi = p > _P_HIGH
    mid = ~(lo | hi)

    if np.any(mid):
        q = p[mid] - 0.5
        r = q * q
        num = ((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]
        den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        x[mid] = num * q / den
    if np.any(lo):
        q = np.sqrt(-2.0 * np.log(p[lo]))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        x[lo] = num / den
    if np.any(hi):
        q = np.sqrt(-2.0 * np.log(1.0 - p[hi]))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        x[hi] = -(num / den)
    return x


def seed_word(seed: int) -> int:
    """Pre-mixed seed word entering every per-vertex hash."""
    return mix64_int(seed & _MASK64)


def gaussians_for_codes(sw: int, codes: np.ndarray) -> np.ndarray:
    """Standard normal variates keyed by (seed word, vertex code)."""
    words = mix64(_U64(sw) ^ mix64(codes))
    return inv_norm_cdf(words_to_uniform(words))


def gaussians_for_split_codes(sw: int, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Variates for vertex codes wider than 64 bits, split into two words.

    The high word is chained through a second mix round (never combined by
    a bare xor, which would cancel whenever the two words coincide).  With
    hi = 0 this agrees bit-for-bit with :func:`gaussians_for_codes`, so
    shallow and deep trees share one stream.
    """
    lo = np.asarray(lo, dtype=_U64)
    hi = np.asarray(hi, dtype=_U64)
    words = mix64(_U64(sw) ^ mix64(lo))
    words = np.where(hi == 0, words, mix64(words ^ hi))
    return inv_norm_cdf(words_to_uniform(words))


def sub_seed(seed: int, tag: str, *indices: int) -> int:
    """Derive an independent 64-bit stream seed from (seed, tag, indices).

    Documented derivation: h = mix(seed xor fnv1a64(tag)), then for each
    index i, h = mix(h xor (i * golden-ratio constant mod 2^64)).
    """
    h = 0xCBF29CE484222325
    for byte in tag.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK64
    h = mix64_int((seed & _MASK64) ^ h)
    for ix in indices:
        h = mix64_int(h ^ ((ix * _GOLDEN) & _MASK64))
    return h


def parse_seed(text: str) -> int:
    """Accept a seed as decimal or 0x-prefixed hex, 64-bit."""
    value = int(text, 16) if text.lower().startswith("0x") else int(text)
    if not 0 <= value <= _MASK64:
        raise ValueError(f"seed {text!r} does not fit in 64 bits")
    return value
