"""Closed-form thermodynamics of a piecewise-linear covariance profile.

The profile A on [0,1] is stored through its piecewise-constant derivative on
a breakpoint grid.  Its least concave majorant is then piecewise linear with
vertices among the grid points, so the free energies, the hardness threshold,
the ground-state levels and the overlap CDF are all exact finite sums.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

LOG2 = math.log(2.0)
SQRT_2LOG2 = math.sqrt(2.0 * LOG2)

_NORM_TOL = 1e-12
_CONTACT_TOL = 1e-12


@dataclass(frozen=True)
class CovarianceSpec:
    """Covariance profile given by slopes a_i on cells (t_{i-1}, t_i]."""

    breakpoints: tuple[float, ...]
    slopes: tuple[float, ...]

    def __post_init__(self):
        bp, sl = self.breakpoints, self.slopes
        if len(bp) < 2 or len(sl) != len(bp) - 1:
            raise ValueError("need m+1 breakpoints for m slopes")
        if bp[0] != 0.0 or bp[-1] != 1.0:
            raise ValueError("breakpoints must start at 0 and end at 1")
        if any(b >= c for b, c in zip(bp, bp[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if any(s < 0.0 for s in sl):
            raise ValueError("slopes must be nonnegative")
        total = sum(s * (c - b) for s, b, c in zip(sl, bp, bp[1:]))
        if abs(total - 1.0) > _NORM_TOL:
            raise ValueError(f"profile integrates to {total!r}, expected 1")

    @property
    def cell_lengths(self) -> tuple[float, ...]:
        return tuple(c - b for b, c in zip(self.breakpoints, self.breakpoints[1:]))


@dataclass(frozen=True)
class ConcaveHull:
    """Least concave majorant of a profile, plus per-cell contact flags."""

    breakpoints: tuple[float, ...]
    slopes: tuple[float, ...]
    contact_mask: tuple[bool, ...]

    @property
    def segment_lengths(self) -> tuple[float, ...]:
        return tuple(c - b for b, c in zip(self.breakpoints, self.breakpoints[1:]))

    def slope_at(self, t: float) -> float:
        """Right-derivative of the hull at t (left limit at t = 1)."""
        bp = self.breakpoints
        for j in range(len(self.slopes)):
            if t < bp[j + 1] or j == len(self.slopes) - 1:
                return self.slopes[j]
        return self.slopes[-1]


IDENTITY = CovarianceSpec((0.0, 1.0), (1.0,))

_TWO_SLOPE = re.compile(r"two-slope\(([^)]+)\)$")
_THREE_SLOPE = re.compile(r"three-slope\(([^)]+)\)$")


def spec_from_profile(name: str) -> CovarianceSpec:
    """Built-in named profiles used by configs and the CLI."""
    name = name.strip()
    if name == "identity":
        return IDENTITY
    m = _TWO_SLOPE.match(name)
    if m:
        a1, a2, split = (float(x) for x in m.group(1).split(","))
        return CovarianceSpec((0.0, split, 1.0), (a1, a2))
    m = _THREE_SLOPE.match(name)
    if m:
        a1, a2, a3, t1, t2 = (float(x) for x in m.group(1).split(","))
        return CovarianceSpec((0.0, t1, t2, 1.0), (a1, a2, a3))
    raise ValueError(f"unknown profile {name!r}")


def evaluate_A(spec: CovarianceSpec, t: float) -> float:
    """Integral of the slopes up to t; exact for the piecewise-linear profile."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t={t!r} outside [0, 1]")
    acc = 0.0
    for b, c, s in zip(spec.breakpoints, spec.breakpoints[1:], spec.slopes):
        if t <= b:
            break
        acc += s * (min(t, c) - b)
    return acc


def concave_hull(spec: CovarianceSpec) -> ConcaveHull:
    """Least concave majorant via an upper monotone-chain scan.

    Collinear graph vertices are merged into a single hull segment.  A cell
    is a contact cell iff both of its endpoints lie on the hull (for a
    piecewise-linear profile its chord then coincides with the hull there).
    """
    pts = [(t, evaluate_A(spec, t)) for t in spec.breakpoints]
    hull: list[tuple[float, float]] = []
    for p in pts:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            # pop the middle point while the chain fails to be strictly concave
            if (y2 - y1) * (p[0] - x2) <= (p[1] - y2) * (x2 - x1):
                hull.pop()
            else:
                break
        hull.append(p)

    hbp = tuple(x for x, _ in hull)
    hslopes = tuple((y2 - y1) / (x2 - x1)
                    for (x1, y1), (x2, y2) in zip(hull, hull[1:]))

    def hull_value(t: float) -> float:
        for j, s in enumerate(hslopes):
            if t <= hbp[j + 1]:
                return hull[j][1] + s * (t - hbp[j])
        return hull[-1][1]

    contact = []
    for i in range(len(spec.slopes)):
        t0, t1 = spec.breakpoints[i], spec.breakpoints[i + 1]
        g0 = hull_value(t0) - evaluate_A(spec, t0)
        g1 = hull_value(t1) - evaluate_A(spec, t1)
        contact.append(g0 <= _CONTACT_TOL and g1 <= _CONTACT_TOL)
    return ConcaveHull(hbp, hslopes, tuple(contact))


def gap_components(spec: CovarianceSpec) -> list[tuple[int, int]]:
    """Maximal runs [i, j) of consecutive non-contact cells."""
    mask = concave_hull(spec).contact_mask
    runs, start = [], None
    for i, on_hull in enumerate(mask):
        if not on_hull and start is None:
            start = i
        if on_hull and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(mask)))
    return runs


def hardness_threshold(spec: CovarianceSpec) -> float:
    """sqrt(2 log 2) / sqrt(ess sup of the slope over the non-contact set).

    Infinite when the profile is concave (every cell on the hull).
    """
    hull = concave_hull(spec)
    gap_slopes = [s for s, c in zip(spec.slopes, hull.contact_mask) if not c]
    if not gap_slopes:
        return math.inf
    top = max(gap_slopes)
    if top <= 0.0:
        raise AssertionError("non-contact cells cannot all have zero slope")
    return SQRT_2LOG2 / math.sqrt(top)


def brw_f(beta: float) -> float:
    """Limiting branching-random-walk free energy per level."""
    if beta < 0.0:
        raise ValueError("beta must be nonnegative")
    if beta < SQRT_2LOG2:
        return LOG2 + beta * beta / 2.0
    return SQRT_2LOG2 * beta


def brw_f_prime(x: float) -> float:
    return x if x < SQRT_2LOG2 else SQRT_2LOG2


def free_energy_F(spec: CovarianceSpec, beta: float) -> float:
    """Free energy as the hull integral of the per-level profile."""
    if beta < 0.0:
        raise ValueError("beta must be nonnegative")
    hull = concave_hull(spec)
    return sum(brw_f(beta * math.sqrt(s)) * L
               for s, L in zip(hull.slopes, hull.segment_lengths))


def t_zero(spec: CovarianceSpec, beta: float) -> float:
    """sup{t : hull slope at t > 2 log 2 / beta^2}, with sup of nothing = 0."""
    if beta <= 0.0:
        return 0.0
    crit = 2.0 * LOG2 / (beta * beta)
    hull = concave_hull(spec)
    t0 = 0.0
    for j, s in enumerate(hull.slopes):
        if s > crit:
            t0 = hull.breakpoints[j + 1]
    return t0


def free_energy_F_crem04(spec: CovarianceSpec, beta: float) -> float:
    """Equivalent frozen/annealed split of the free energy, for cross-checks."""
    if beta < 0.0:
        raise ValueError("beta must be nonnegative")
    if beta == 0.0:
        return LOG2
    hull = concave_hull(spec)
    t0 = t_zero(spec, beta)
    frozen = 0.0
    hull_at_t0 = 0.0
    for j, (s, L) in enumerate(zip(hull.slopes, hull.segment_lengths)):
        lo = hull.breakpoints[j]
        if lo >= t0:
            break
        seg = min(hull.breakpoints[j + 1], t0) - lo
        frozen += math.sqrt(s) * seg
        hull_at_t0 += s * seg
    return (beta * SQRT_2LOG2 * frozen
            + beta * beta / 2.0 * (1.0 - hull_at_t0)
            + LOG2 * (1.0 - t0))


def block_free_energy_Ftilde(spec: CovarianceSpec, beta: float) -> float:
    """Same integral taken over the raw slopes instead of the hull."""
    if beta < 0.0:
        raise ValueError("beta must be nonnegative")
    return sum(brw_f(beta * math.sqrt(s)) * L
               for s, L in zip(spec.slopes, spec.cell_lengths))


def gap_G(spec: CovarianceSpec, beta: float) -> tuple[float, float]:
    """Free-energy gap G = F - Ftilde and its exact derivative in beta."""
    g = free_energy_F(spec, beta) - block_free_energy_Ftilde(spec, beta)
    if -1e-12 < g < 0.0:
        g = 0.0
    hull = concave_hull(spec)
    dg = sum(brw_f_prime(beta * math.sqrt(s)) * math.sqrt(s) * L
             for s, L in zip(hull.slopes, hull.segment_lengths))
    dg -= sum(brw_f_prime(beta * math.sqrt(s)) * math.sqrt(s) * L
              for s, L in zip(spec.slopes, spec.cell_lengths))
    return g, dg


def ground_state_levels(spec: CovarianceSpec) -> tuple[float, float]:
    """(attainable-maximum level, efficiently-reachable level)."""
    hull = concave_hull(spec)
    x_gse = SQRT_2LOG2 * sum(math.sqrt(s) * L
                             for s, L in zip(hull.slopes, hull.segment_lengths))
    x_star = SQRT_2LOG2 * sum(math.sqrt(s) * L
                              for s, L in zip(spec.slopes, spec.cell_lengths))
    return x_gse, x_star


def slope_range(spec: CovarianceSpec, t_lo: float, t_hi: float) -> tuple[float, float]:
    """Essential inf/sup of the slope over [t_lo, t_hi]."""
    slopes = [s for s, b, c in zip(spec.slopes, spec.breakpoints,
                                   spec.breakpoints[1:])
              if c > t_lo + 1e-15 and b < t_hi - 1e-15]
    return min(slopes), max(slopes)


def overlap_cdf(spec: CovarianceSpec, beta: float, t: float) -> float:
    """CDF of the limiting two-replica overlap at time t."""
    if beta <= 0.0:
        raise ValueError("beta must be positive")
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t={t!r} outside [0, 1]")
    if t > t_zero(spec, beta):
        return 1.0
    a_hat = concave_hull(spec).slope_at(t)
    if a_hat <= 0.0:
        return 1.0
    return min(1.0, max(0.0, SQRT_2LOG2 / (beta * math.sqrt(a_hat))))
