"""Compiled inner loops for deep-tree block scans.

The scan that dominates the hardness experiments evaluates the recentred
field at every leaf of a depth-m block and takes the maximum.  The compiled
path below replays exactly the arithmetic of the vectorized numpy route
(same hash, same Horner evaluation of the normal quantile, same add order),
so the two produce bit-identical doubles; tests assert that equality.

Everything degrades gracefully to numpy when numba is unavailable.
"""

from __future__ import annotations

import math

import numpy as np

from . import rng

try:
    from numba import njit
    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    NUMBA_AVAILABLE = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(f):
            return f
        return wrap

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX_M1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_U0 = np.uint64(0)
_U1 = np.uint64(1)
_TWO_NEG53 = 2.0 ** -53

_A0, _A1, _A2, _A3, _A4, _A5 = rng._A
_B0, _B1, _B2, _B3, _B4 = rng._B
_C0, _C1, _C2, _C3, _C4, _C5 = rng._C
_D0, _D1, _D2, _D3 = rng._D
_P_LOW = rng._P_LOW
_P_HIGH = rng._P_HIGH


@njit(cache=True, inline="always")
def _mix64(x):
    z = x + _GOLDEN
    z = (z ^ (z >> _S30)) * _MIX_M1
    z = (z ^ (z >> _S27)) * _MIX_M2
    return z ^ (z >> _S31)


@njit(cache=True, inline="always")
def _inv_norm(p):
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        num = ((((_C0 * q + _C1) * q + _C2) * q + _C3) * q + _C4) * q + _C5
        den = (((_D0 * q + _D1) * q + _D2) * q + _D3) * q + 1.0
        return num / den
    if p > _P_HIGH:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        num = ((((_C0 * q + _C1) * q + _C2) * q + _C3) * q + _C4) * q + _C5
        den = (((_D0 * q + _D1) * q + _D2) * q + _D3) * q + 1.0
        return -(num / den)
    q = p - 0.5
    r = q * q
    num = ((((_A0 * r + _A1) * r + _A2) * r + _A3) * r + _A4) * r + _A5
    den = ((((_B0 * r + _B1) * r + _B2) * r + _B3) * r + _B4) * r + 1.0
    return num * q / den


_U_MAX = 1.0 - 2.0 ** -53


@njit(cache=True, inline="always")
def _finish(w):
    u = (np.float64(w >> _S11) + 0.5) * _TWO_NEG53
    if u > _U_MAX:
        u = _U_MAX
    return _inv_norm(u)


@njit(cache=True, inline="always")
def _gauss(sw, lo, hi):
    w = _mix64(sw ^ _mix64(lo))
    if hi != _U0:
        w = _mix64(w ^ hi)
    return _finish(w)


@njit(cache=True, inline="always")
def _fill_words(sw, b_lo, b_hi, n, wbuf):
    """Hash words for the n codes b + 0 .. b + n-1, b given as (lo, hi).

    The high word is constant along each of at most two carry runs, so the
    branch is hoisted out of the hot loops.
    """
    if b_lo == _U0:
        split = n
    else:
        rem = _U0 - b_lo
        split = n if rem >= np.uint64(n) else np.int64(rem)
    if b_hi == _U0:
        for i in range(split):
            wbuf[i] = _mix64(sw ^ _mix64(b_lo + np.uint64(i)))
    else:
        for i in range(split):
            w = _mix64(sw ^ _mix64(b_lo + np.uint64(i)))
            wbuf[i] = _mix64(w ^ b_hi)
    if split < n:
        hi2 = b_hi + _U1
        for i in range(split, n):
            w = _mix64(sw ^ _mix64(b_lo + np.uint64(i)))
            wbuf[i] = _mix64(w ^ hi2)


@njit(cache=True)
def _words_to_gauss(wbuf, n, ubuf, gbuf):
    """Quantile-transform n hash words into gbuf, bit-identical to _finish.

    The central rational branch covers ~95% of inputs, so it is evaluated
    branch-free for everyone (three vectorizable passes) and the rare tail
    entries are then recomputed exactly.
    """
    for i in range(n):
        u = (np.float64(wbuf[i] >> _S11) + 0.5) * _TWO_NEG53
        ubuf[i] = u if u <= _U_MAX else _U_MAX
    for i in range(n):
        q = ubuf[i] - 0.5
        r = q * q
        num = ((((_A0 * r + _A1) * r + _A2) * r + _A3) * r + _A4) * r + _A5
        gbuf[i] = num * q
    for i in range(n):
        q = ubuf[i] - 0.5
        r = q * q
        den = ((((_B0 * r + _B1) * r + _B2) * r + _B3) * r + _B4) * r + 1.0
        gbuf[i] = gbuf[i] / den
    for i in range(n):
        u = ubuf[i]
        if u < _P_LOW or u > _P_HIGH:
            gbuf[i] = _inv_norm(u)


@njit(cache=True)
def _block_max_jit(sw, root_lo, root_hi, m, sigmas, buf, wbuf, ubuf, gbuf):
    """Max recentred leaf value of the depth-m block rooted at the given code.

    Partial sums are built level by level inside buf, combined backwards so
    each parent value is still live when its two children read it.  At the
    leaf level only each sibling pair's larger word is pushed through the
    quantile: the quantile is monotone, so the pair max is unchanged.
    """
    buf[0] = 0.0
    for j in range(1, m):
        s = sigmas[j - 1]
        sj = np.uint64(j)
        b_lo = root_lo << sj
        b_hi = (root_hi << sj) | (root_lo >> (np.uint64(64) - sj))
        n = 1 << j
        _fill_words(sw, b_lo, b_hi, n, wbuf)
        _words_to_gauss(wbuf, n, ubuf, gbuf)
        for i in range(n - 1, -1, -1):
            buf[i] = buf[i >> 1] + s * gbuf[i]
    s = sigmas[m - 1]
    sj = np.uint64(m)
    b_lo = root_lo << sj
    b_hi = (root_hi << sj) | (root_lo >> (np.uint64(64) - sj))
    n = 1 << m
    _fill_words(sw, b_lo, b_hi, n, wbuf)
    half = n >> 1
    for p in range(half):
        w = wbuf[2 * p]
        if wbuf[2 * p + 1] > w:
            w = wbuf[2 * p + 1]
        wbuf[p] = w
    _words_to_gauss(wbuf, half, ubuf, gbuf)
    best = -1.0e300
    for p in range(half):
        v = buf[p] + s * gbuf[p]
        if v > best:
            best = v
    return best


@njit(cache=True)
def _block_exceeds_jit(sw, root_lo, root_hi, m, sigmas, threshold,
                       wall, fidx, fsum, nidx, nsum):
    """Exact indicator: max recentred leaf value of the block > threshold.

    Equivalent to _block_max_jit(...) > threshold but usually much cheaper.
    All hash words are stored heap-style (level j at offsets 2^j..2^{j+1}-1)
    and the per-level maximum word bounds, through the monotone quantile,
    every Gaussian of that level.  A frontier sweep then drops each vertex
    whose partial sum plus the remaining-level bound cannot reach the
    threshold; hash words are far cheaper than quantile evaluations, so
    pruned subtrees cost almost nothing.  The bound is sound (sigmas are
    nonnegative), hence the indicator is exact.
    """
    gmax = np.empty(m + 1)
    rem = np.empty(m + 1)
    for j in range(1, m + 1):
        sj = np.uint64(j)
        b_lo = root_lo << sj
        b_hi = (root_hi << sj) | (root_lo >> (np.uint64(64) - sj))
        n = 1 << j
        _fill_words(sw, b_lo, b_hi, n, wall[n:2 * n])
        w = wall[n]
        for i in range(n + 1, 2 * n):
            if wall[i] > w:
                w = wall[i]
        gmax[j] = _finish(w)
    rem[m] = 0.0
    for j in range(m - 1, -1, -1):
        rem[j] = rem[j + 1] + sigmas[j] * gmax[j + 1]
    fidx[0] = 1
    fsum[0] = 0.0
    fn = 1
    for j in range(1, m + 1):
        s = sigmas[j - 1]
        rj = rem[j]
        nn = 0
        for t in range(fn):
            base = 2 * fidx[t]
            parent = fsum[t]
            for c in range(2):
                h = base + c
                sc = parent + s * _finish(wall[h])
                if sc + rj > threshold:
                    nidx[nn] = h
                    nsum[nn] = sc
                    nn += 1
        if nn == 0:
            return False
        fn = nn
        ti = fidx
        fidx = nidx
        nidx = ti
        tf = fsum
        fsum = nsum
        nsum = tf
    return True


@njit(cache=True)
def _chain_hits_jit(seed_words, root_los, root_his, block_depths, sigmas,
                    thresholds):
    """Per-trial flag: does any chain block's leaf max exceed its threshold."""
    trials = seed_words.size
    n_blocks = root_los.size
    m_max = sigmas.shape[1]
    hits = np.zeros(trials, dtype=np.uint8)
    wall = np.empty(2 << m_max, dtype=np.uint64)
    fidx = np.empty(1 << m_max, dtype=np.int64)
    fsum = np.empty(1 << m_max)
    nidx = np.empty(1 << m_max, dtype=np.int64)
    nsum = np.empty(1 << m_max)
    for t in range(trials):
        sw = seed_words[t]
        for k in range(n_blocks):
            if _block_exceeds_jit(sw, root_los[k], root_his[k],
                                  block_depths[k], sigmas[k], thresholds[k],
                                  wall, fidx, fsum, nidx, nsum):
                hits[t] = 1
                break
    return hits


def block_max_numpy(sw: int, root_code: int, m: int,
                    sigmas: np.ndarray) -> float:
    """Reference numpy route for the same block max (bit-identical)."""
    from .field import split_codes
    acc = np.zeros(1)
    for j in range(1, m + 1):
        lo, hi = split_codes(root_code << j, 1 << j)
        g = rng.gaussians_for_split_codes(sw, lo, hi)
        acc = np.repeat(acc, 2) + sigmas[j - 1] * g
    return float(acc.max())


def block_exceeds(sw: int, root_code: int, m: int, sigmas: np.ndarray,
                  threshold: float) -> bool:
    """Exact block_max(...) > threshold, with sound subtree pruning."""
    sigmas = np.ascontiguousarray(sigmas, dtype=np.float64)
    if not NUMBA_AVAILABLE:
        return block_max_numpy(sw, root_code, m, sigmas) > threshold
    wall = np.empty(2 << m, dtype=np.uint64)
    fidx = np.empty(1 << m, dtype=np.int64)
    fsum = np.empty(1 << m)
    nidx = np.empty(1 << m, dtype=np.int64)
    nsum = np.empty(1 << m)
    return bool(_block_exceeds_jit(
        np.uint64(sw), np.uint64(root_code & 0xFFFFFFFFFFFFFFFF),
        np.uint64(root_code >> 64), m, sigmas, threshold,
        wall, fidx, fsum, nidx, nsum))


def block_max(sw: int, root_code: int, m: int, sigmas: np.ndarray) -> float:
    sigmas = np.ascontiguousarray(sigmas, dtype=np.float64)
    if not NUMBA_AVAILABLE:
        return block_max_numpy(sw, root_code, m, sigmas)
    buf = np.empty(1 << (m - 1) if m > 1 else 1)
    wbuf = np.empty(1 << m, dtype=np.uint64)
    ubuf = np.empty(1 << m)
    gbuf = np.empty(1 << m)
    return float(_block_max_jit(
        np.uint64(sw), np.uint64(root_code & 0xFFFFFFFFFFFFFFFF),
        np.uint64(root_code >> 64), m, sigmas, buf, wbuf, ubuf, gbuf))


def chain_hits(seed_words: np.ndarray, root_codes: list[int],
               block_depths: np.ndarray, sigmas: np.ndarray,
               thresholds: np.ndarray) -> np.ndarray:
    """Vector of 0/1 chain-steep flags, one per trial seed word."""
    los = np.array([c & 0xFFFFFFFFFFFFFFFF for c in root_codes],
                   dtype=np.uint64)
    his = np.array([c >> 64 for c in root_codes], dtype=np.uint64)
    seed_words = np.asarray(seed_words, dtype=np.uint64)
    block_depths = np.asarray(block_depths, dtype=np.int64)
    sigmas = np.ascontiguousarray(sigmas, dtype=np.float64)
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if NUMBA_AVAILABLE:
        return _chain_hits_jit(seed_words, los, his, block_depths, sigmas,
                               thresholds)
    hits = np.zeros(seed_words.size, dtype=np.uint8)
    for t, sw in enumerate(seed_words):
        for k, code in enumerate(root_codes):
            mx = block_max_numpy(int(sw), code, int(block_depths[k]),
                                 sigmas[k])
            if mx > thresholds[k]:
                hits[t] = 1
                break
    return hits
