"""Radial local-uniform norms and their equivalence check.

For a radial function u on R^d sampled as u(r), r in [0, R], two squared
norms are compared:

    A = sup over centers of int_{B(x0, 1)} u^2 dx    (ambient loc-unif mass),
    B = sup_{r0 >= 1} r0^(1-d) int_{r0-1}^{r0+1} u(r)^2 r^(d-1) dr,

A reduced to the center radius c = |x0| by symmetry.  The ball integral is
done in radial coordinates through the sphere-ball intersection measure
S_d(r; c): an arc length for d = 2, a spherical-cap area for d = 3, and a
numerically integrated cap-angle formula otherwise.  The two norms are
equivalent with dimension-dependent constants; the sweep reports the
empirical ratio extremes over a function family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import quad

__all__ = [
    "RadialFunction",
    "sphere_ball_intersection",
    "norm_A",
    "norm_B",
    "equivalence_check",
    "crown_packing_count",
    "unit_ball_volume",
]


def unit_ball_volume(d: int) -> float:
    return math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)


def sphere_surface(d: int) -> float:
    """Surface measure of the unit (d-1)-sphere in R^d."""
    return 2.0 * math.pi ** (d / 2.0) / math.gamma(d / 2.0)


@dataclass
class RadialFunction:
    """Samples u(r) on a uniform radial grid [0, R] in ambient dimension d."""

    r: np.ndarray
    values: np.ndarray
    d: int

    def __post_init__(self):
        self.r = np.asarray(self.r, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.r.shape != self.values.shape or self.r.ndim != 1:
            raise ValueError("r and values must be matching 1-d arrays")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("radial samples must be finite")
        if self.d < 1:
            raise ValueError("ambient dimension must be >= 1")

    @property
    def R(self):
        return float(self.r[-1])

    @property
    def h(self):
        return float(self.r[1] - self.r[0])

    @classmethod
    def from_callable(cls, fn, d, R=24.0, h=0.01):
        r = np.arange(0.0, R + 0.5 * h, h)
        return cls(r=r, values=np.asarray(fn(r), dtype=float), d=d)

    def scaled(self, lam):
        return RadialFunction(r=self.r, values=lam * self.values, d=self.d)


def _cap_fraction(cos_theta, d):
    """Fraction of the (d-1)-sphere within polar angle theta of a pole."""
    cos_theta = np.clip(cos_theta, -1.0, 1.0)
    if d == 2:
        return np.arccos(cos_theta) / math.pi
    if d == 3:
        return 0.5 * (1.0 - cos_theta)
    total = quad(lambda t: math.sin(t) ** (d - 2), 0.0, math.pi)[0]

    def one(ct):
        th = math.acos(ct)
        return quad(lambda t: math.sin(t) ** (d - 2), 0.0, th)[0] / total

    return np.vectorize(one)(cos_theta)


def sphere_ball_intersection(r, c, d):
    """Measure of {|x| = r} inside the unit ball B(x0, 1), |x0| = c.

    Exact arc/cap formulas for d = 2, 3; cap-angle quadrature otherwise.
    """
    r = np.asarray(r, dtype=float)
    full = sphere_surface(d) * r ** (d - 1)
    if c < 1e-12:
        return np.where(r < 1.0, full, 0.0)
    out = np.zeros_like(r)
    inside = r <= 1.0 - c
    out[inside] = full[inside]
    lens = (r > abs(1.0 - c)) & (r < 1.0 + c) & ~inside
    if np.any(lens):
        rl = r[lens]
        cos_t = (rl**2 + c**2 - 1.0) / (2.0 * rl * c)
        out[lens] = full[lens] * _cap_fraction(cos_t, d)
    return out


def _sup_scan(fn, lo, hi, coarse=0.05, refine_iters=40):
    """Max of a smooth scalar function by grid scan + golden refinement."""
    grid = np.arange(lo, hi + 0.5 * coarse, coarse)
    vals = np.array([fn(c) for c in grid])
    i = int(np.argmax(vals))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, grid.shape[0] - 1)]
    gr = (math.sqrt(5.0) - 1.0) / 2.0
    c1 = b - gr * (b - a)
    c2 = a + gr * (b - a)
    f1, f2 = fn(c1), fn(c2)
    for _ in range(refine_iters):
        if f1 > f2:
            b, c2, f2 = c2, c1, f1
            c1 = b - gr * (b - a)
            f1 = fn(c1)
        else:
            a, c1, f1 = c1, c2, f2
            c2 = a + gr * (b - a)
            f2 = fn(c2)
    return max(float(np.max(vals)), f1, f2)


def norm_A(u: RadialFunction, coarse=0.05) -> float:
    """sup over ball centers of the squared mass in a unit ball.

    Centers reduce to their radius c; u is treated as 0 beyond its grid.
    Requires the grid to resolve unit balls (h <= 0.01).
    """
    if u.h > 0.01 + 1e-12:
        raise ValueError("radial grid must resolve unit balls (h <= 0.01)")
    r = u.r
    u2 = u.values**2

    def mass(c):
        w = sphere_ball_intersection(r, c, u.d)
        return float(np.trapezoid(u2 * w, r))

    return _sup_scan(mass, 0.0, max(u.R - 1.0, 0.0), coarse=coarse)


def norm_B(u: RadialFunction, coarse=0.05) -> float:
    """sup_{r0 in [1, R-1]} r0^(1-d) int_{r0-1}^{r0+1} u^2 r^(d-1) dr."""
    if u.R < 2.0:
        raise ValueError("need R >= 2 to place the unit window")
    r = u.r
    g = u.values**2 * r ** (u.d - 1)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (g[1:] + g[:-1]) * np.diff(r))])

    def window(r0):
        lo = np.interp(r0 - 1.0, r, cum)
        hi = np.interp(r0 + 1.0, r, cum)
        return float((hi - lo) / r0 ** (u.d - 1))

    return _sup_scan(window, 1.0, u.R - 1.0, coarse=coarse)


@dataclass
class EquivalenceReport:
    d: int
    family_size: int
    ratio_min: float
    ratio_max: float
    witness_min: int
    witness_max: int

    @property
    def spread(self):
        return self.ratio_max / self.ratio_min


def equivalence_check(family: Sequence[RadialFunction], d: int) -> EquivalenceReport:
    """Extremes of A/B over a family of radial functions in dimension d."""
    ratios = []
    for i, u in enumerate(family):
        if u.d != d:
            raise ValueError("family member dimension mismatch")
        a = norm_A(u)
        b = norm_B(u)
        if a == 0.0 and b == 0.0:
            continue
        if b == 0.0:
            raise ValueError("degenerate family member: B vanished but A did not")
        ratios.append((a / b, i))
    if not ratios:
        raise ValueError("degenerate family: all norms vanished")
    ratios.sort()
    return EquivalenceReport(
        d=d, family_size=len(family),
        ratio_min=ratios[0][0], ratio_max=ratios[-1][0],
        witness_min=ratios[0][1], witness_max=ratios[-1][1])


def crown_packing_count(r0: float) -> int:
    """Disjoint unit disks with centers on the circle of radius r0 that fit in
    the crown r0 - 1 <= |x| < r0 + 1 (plane case): adjacent centers must be
    2 apart, i.e. angular separation 2 arcsin(1/r0)."""
    if r0 <= 1.0:
        return 1
    return int(math.pi / math.asin(1.0 / r0))
