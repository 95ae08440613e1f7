"""Problem coefficients and the degeneracy-removing change of variables.

The model equation carries a wave-speed-squared coefficient a(x) that may
degenerate at the origin (typically a(x) = |x|^alpha with alpha < 2), a
reaction coefficient b(x), a lower-order source f(u) and a gradient
perturbation g(x, t, u_x, u_t).  Solving happens in the stretched variable

    X = phi(x) = integral_0^x dy / sqrt(a(y)),

where the principal part becomes the radial Laplacian in an effective
integer dimension d.  This module owns phi, its inverse, the effective
dimension arithmetic for the power-law family, and the numerical
admissibility check of the bounded-defect condition

    |(N-1) sqrt(a)/x - a'/(2 sqrt(a)) - (d-1)/phi(x)| <= M.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "DivergentIntegralError",
    "NonIntegerDimensionError",
    "AdmissibilityReport",
    "PowerLawCoefficient",
    "CoefficientModel",
    "constant_model",
    "power_law_model",
    "tabulated_model",
    "perturbation_family",
    "phi",
    "phi_inverse",
    "effective_dimension",
    "check_admissibility",
    "check_perturbation_bounds",
]


class DivergentIntegralError(ValueError):
    """The stretched-coordinate integral failed to converge near x = 0."""


class NonIntegerDimensionError(ValueError):
    """2(N - alpha)/(2 - alpha) is not a positive integer."""


_GAUSS_NODES, _GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(20)


def _gauss_panel(func, lo, hi):
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    return half * float(np.sum(_GAUSS_WEIGHTS * func(mid + half * _GAUSS_NODES)))


def _graded_integral(func, x, rtol=1e-12, max_levels=4000):
    """Integrate func over (0, x] with a geometric mesh graded toward 0.

    Suited to integrands with an integrable endpoint singularity like
    y^(-alpha/2), alpha < 2.  Raises DivergentIntegralError when the dyadic
    contributions do not decay.
    """
    if x == 0.0:
        return 0.0
    total = 0.0
    hi = x
    pieces = []
    for level in range(max_levels):
        lo = 0.5 * hi
        piece = _gauss_panel(func, lo, hi)
        if not np.isfinite(piece):
            raise DivergentIntegralError(
                f"non-finite contribution on ({lo:g}, {hi:g})")
        pieces.append(piece)
        total += piece
        if len(pieces) >= 12:
            recent = pieces[-10:]
            if abs(recent[-1]) >= 0.999 * abs(recent[0]) and abs(recent[-1]) > 0:
                raise DivergentIntegralError(
                    "contributions near 0 do not decay; 1/sqrt(a) is not integrable")
        if abs(piece) <= rtol * abs(total) and level >= 8:
            return total
        hi = lo
    raise DivergentIntegralError("graded quadrature did not converge")


@dataclass(frozen=True)
class PowerLawCoefficient:
    """The family a(x) = |x|^alpha, alpha < 2, in physical dimension N."""

    alpha: float
    N: int

    def __post_init__(self):
        if self.alpha >= 2.0:
            raise DivergentIntegralError("alpha >= 2 makes 1/sqrt(a) non-integrable")
        if self.N < 2:
            raise NonIntegerDimensionError(
                "the bounded-defect condition fails near 0 for N = 1, any alpha < 2")


def effective_dimension(coef: PowerLawCoefficient) -> int:
    """Integer d = 2(N - alpha)/(2 - alpha) for the power-law family.

    For N = 2 this is 2 for every admissible alpha; for N >= 3 only the
    discrete exponents alpha_k = 2(k - N)/(k - 2) give an integer (d = k).
    """
    d = 2.0 * (coef.N - coef.alpha) / (2.0 - coef.alpha)
    d_int = round(d)
    if d_int < 1 or abs(d - d_int) > 1e-12:
        raise NonIntegerDimensionError(
            f"effective dimension {d!r} is not a positive integer "
            f"(N={coef.N}, alpha={coef.alpha})")
    return int(d_int)


def _zero_f(u):
    return np.zeros_like(np.asarray(u, dtype=float))


def _zero_g(x, t, v, z):
    return np.zeros_like(np.asarray(v, dtype=float))


@dataclass(frozen=True)
class CoefficientModel:
    """Immutable bundle of problem data a, b, f, g and derived quantities.

    All callables accept scalars or numpy arrays.  `family` is one of
    "constant", "power_law", "tabulated"; closed forms for phi and its
    inverse are used where the family provides them.
    """

    a: Callable
    a_prime: Callable
    b: Callable
    f: Callable
    g: Callable
    N: int
    p: float
    q: float
    M: float
    d: int
    family: str = "generic"
    alpha: float = 0.0
    a0: float = 1.0
    x_max: float = 100.0
    F: Optional[Callable] = None
    _x_table: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.p <= 1.0:
            raise ValueError("reaction exponent p must exceed 1")
        if self.q >= self.p:
            raise ValueError("growth exponent q must stay below p")
        if self.M <= 0.0:
            raise ValueError("perturbation bound M must be positive")
        if self.d < 1 or self.d != int(self.d):
            raise ValueError("effective dimension d must be a positive integer")
        if self.d >= 2 and self.p >= (self.d + 3) / (self.d - 1):
            raise ValueError(
                f"p={self.p} violates subconformality p < (d+3)/(d-1) for d={self.d}")

    # -- stretched coordinate -------------------------------------------------

    def phi(self, x):
        return phi(self, x)

    def phi_inverse(self, X):
        return phi_inverse(self, X)

    def beta(self, X):
        """Reaction coefficient in the stretched variable, beta(X) = b(x)."""
        X = np.asarray(X, dtype=float)
        scalar = X.ndim == 0
        x = self._x_of_X(np.atleast_1d(X))
        out = np.asarray(self.b(x), dtype=float)
        return float(out[0]) if scalar else out

    def _x_of_X(self, X):
        if self.family == "constant":
            return X * math.sqrt(self.a0)
        if self.family == "power_law":
            c = 2.0 / (2.0 - self.alpha)
            return (np.maximum(X, 0.0) / c) ** (2.0 / (2.0 - self.alpha))
        table = self._x_table.get("xX")
        if table is None:
            xs = np.concatenate([
                [0.0],
                np.geomspace(1e-8 * max(self.x_max, 1.0), self.x_max, 4096),
            ])
            Xs = np.array([phi(self, float(x)) for x in xs])
            table = (xs, Xs)
            self._x_table["xX"] = table
        xs, Xs = table
        return np.interp(X, Xs, xs)

    def admissibility_defect(self, x):
        """(N-1) sqrt(a)/x - a'/(2 sqrt(a)) - (d-1)/phi(x); exactly 0 for the
        built-in constant and power-law families."""
        x = np.asarray(x, dtype=float)
        if self.family in ("constant", "power_law"):
            return np.zeros_like(x)
        sa = np.sqrt(self.a(x))
        out = (self.N - 1) * sa / x - self.a_prime(x) / (2.0 * sa)
        if self.d > 1:
            out = out - (self.d - 1) / np.array([phi(self, float(xi)) for xi in np.atleast_1d(x)]).reshape(x.shape)
        return out

    def has_perturbations(self):
        return self.f is not _zero_f or self.g is not _zero_g or self.family == "tabulated"

    def G(self, X, t, UX, Ut):
        """Gradient perturbation in the stretched variable:
        g(x, t, u_x, u_t) plus the admissibility defect times U_X."""
        X = np.asarray(X, dtype=float)
        if self.g is _zero_g and self.family in ("constant", "power_law"):
            return np.zeros_like(X)
        x = self._x_of_X(X)
        a_x = np.asarray(self.a(x), dtype=float)
        UX = np.asarray(UX, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            ux = np.where(a_x > 0, UX / np.sqrt(a_x), 0.0)
        out = np.asarray(self.g(x, t, ux, Ut), dtype=float)
        defect = np.asarray(self.admissibility_defect(x), dtype=float)
        if np.any(defect != 0.0):
            out = out + defect * np.asarray(UX, dtype=float)
        return out

    def antiderivative_F(self, u):
        """F(u) = integral_0^u f(v) dv, from the supplied closed form or a
        cached cumulative quadrature lattice."""
        u = np.asarray(u, dtype=float)
        if self.F is not None:
            return np.asarray(self.F(u), dtype=float)
        if self.f is _zero_f:
            return np.zeros_like(u)
        hi = float(np.max(np.abs(u))) if u.size else 1.0
        key = self._x_table.get("F_hi", 0.0)
        if hi > key:
            hi_new = max(2.0 * hi, 1.0)
            grid = np.linspace(-hi_new, hi_new, 8193)
            vals = np.asarray(self.f(grid), dtype=float)
            from scipy.integrate import cumulative_trapezoid
            cum = cumulative_trapezoid(vals, grid, initial=0.0)
            cum -= np.interp(0.0, grid, cum)
            self._x_table["F_hi"] = hi_new
            self._x_table["F_grid"] = grid
            self._x_table["F_cum"] = cum
        return np.interp(u, self._x_table["F_grid"], self._x_table["F_cum"])


def _fd_derivative(a):
    def a_prime(x):
        x = np.asarray(x, dtype=float)
        h = 1e-6 * (1.0 + np.abs(x))
        return (np.asarray(a(x + h), dtype=float) - np.asarray(a(x - h), dtype=float)) / (2.0 * h)
    return a_prime


def _as_b(b):
    if callable(b):
        return b
    b0 = float(b)
    return lambda x: np.full_like(np.asarray(x, dtype=float), b0)


def constant_model(a0=1.0, N=1, p=3.0, q=1.0, M=1.0, b=1.0, f=None, g=None,
                   F=None, x_max=100.0) -> CoefficientModel:
    """a(x) = a0 > 0.  The bounded-defect condition forces d = N."""
    if a0 <= 0:
        raise ValueError("a0 must be positive")
    a0 = float(a0)
    return CoefficientModel(
        a=lambda x: np.full_like(np.asarray(x, dtype=float), a0),
        a_prime=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        b=_as_b(b),
        f=f if f is not None else _zero_f,
        g=g if g is not None else _zero_g,
        N=N, p=p, q=q, M=M, d=N,
        family="constant", a0=a0, x_max=x_max, F=F,
    )


def power_law_model(alpha, N, p=3.0, q=1.0, M=1.0, b=1.0, f=None, g=None,
                    F=None, x_max=100.0) -> CoefficientModel:
    """a(x) = |x|^alpha with derived integer effective dimension."""
    coef = PowerLawCoefficient(alpha=float(alpha), N=int(N))
    d = effective_dimension(coef)
    al = float(alpha)
    return CoefficientModel(
        a=lambda x: np.abs(np.asarray(x, dtype=float)) ** al,
        a_prime=lambda x: al * np.sign(np.asarray(x, dtype=float)) * np.abs(np.asarray(x, dtype=float)) ** (al - 1.0),
        b=_as_b(b),
        f=f if f is not None else _zero_f,
        g=g if g is not None else _zero_g,
        N=int(N), p=p, q=q, M=M, d=d,
        family="power_law", alpha=al, x_max=x_max, F=F,
    )


def tabulated_model(x_nodes, a_values, N, p=3.0, q=1.0, M=1.0, d=None, b=1.0,
                    f=None, g=None, F=None) -> CoefficientModel:
    """Coefficient a given on a monotone (x, a(x)) table, interpolated linearly.

    `d` defaults to the nearest admissible integer of the defect-minimizing
    dimension and must be supplied when that heuristic is unwanted.
    """
    x_nodes = np.asarray(x_nodes, dtype=float)
    a_values = np.asarray(a_values, dtype=float)
    if x_nodes.ndim != 1 or x_nodes.shape != a_values.shape:
        raise ValueError("tabulated coefficients need matching 1-d x and a columns")
    if np.any(np.diff(x_nodes) <= 0):
        raise ValueError("tabulated x column must be strictly increasing")
    if np.any(a_values <= 0):
        raise ValueError("tabulated a(x) must be positive")

    def a(x):
        return np.interp(np.asarray(x, dtype=float), x_nodes, a_values)

    if d is None:
        d = max(1, round(float(2.0 * (N - 0.0) / 2.0)))  # default: d = N
    return CoefficientModel(
        a=a, a_prime=_fd_derivative(a), b=_as_b(b),
        f=f if f is not None else _zero_f,
        g=g if g is not None else _zero_g,
        N=int(N), p=p, q=q, M=M, d=int(d),
        family="tabulated", x_max=float(x_nodes[-1]),
    )


def perturbation_family(M, q):
    """Bounded lower-order terms used by the perturbation test runs.

    f(u) = M sign(u) |u|^q   (so |f| <= M(1 + |u|^q)),
    g(x, t, v, z) = M sin(v + z)   (so |g| <= M),
    F(u) = M |u|^(q+1) / (q+1).
    """
    M = float(M)
    q = float(q)

    def f(u):
        u = np.asarray(u, dtype=float)
        return M * np.sign(u) * np.abs(u) ** q

    def g(x, t, v, z):
        return M * np.sin(np.asarray(v, dtype=float) + np.asarray(z, dtype=float))

    def F(u):
        u = np.asarray(u, dtype=float)
        return M * np.abs(u) ** (q + 1.0) / (q + 1.0)

    return f, g, F


def phi(model: CoefficientModel, x: float) -> float:
    """Stretched coordinate phi(x) = integral_0^x dy/sqrt(a(y)).

    Uses the closed form for the constant and power-law families and a
    geometric mesh graded toward the origin otherwise.  Raises
    DivergentIntegralError when 1/sqrt(a) is not integrable at 0.
    """
    x = float(x)
    if x < 0:
        raise ValueError("phi is defined for x >= 0")
    if x == 0.0:
        return 0.0
    if model.family == "constant":
        return x / math.sqrt(model.a0)
    if model.family == "power_law":
        return 2.0 / (2.0 - model.alpha) * x ** ((2.0 - model.alpha) / 2.0)

    def integrand(y):
        ay = np.asarray(model.a(y), dtype=float)
        if np.any(ay <= 0):
            raise ValueError("a(x) must stay positive on (0, x]")
        return 1.0 / np.sqrt(ay)

    return _graded_integral(integrand, x)


def phi_inverse(model: CoefficientModel, X: float) -> float:
    """Inverse of the stretched coordinate, |phi(x) - X| <= 1e-9 (1 + X)."""
    from scipy.optimize import brentq

    X = float(X)
    if X < 0:
        raise ValueError("phi_inverse is defined for X >= 0")
    if X == 0.0:
        return 0.0
    if model.family == "constant":
        return X * math.sqrt(model.a0)
    if model.family == "power_law":
        c = 2.0 / (2.0 - model.alpha)
        return (X / c) ** (2.0 / (2.0 - model.alpha))
    hi = 1.0
    for _ in range(200):
        if phi(model, hi) >= X:
            break
        hi *= 2.0
        if hi > model.x_max * 2.0:
            raise ValueError(f"X={X:g} exceeds phi({model.x_max:g})")
    x = brentq(lambda t: phi(model, t) - X, 0.0, hi, xtol=1e-15, rtol=8.9e-16)
    if abs(phi(model, x) - X) > 1e-9 * (1.0 + X):
        raise ValueError("phi inversion failed to converge")
    return x


def check_perturbation_bounds(model: CoefficientModel, n: int = 64,
                              u_scale: float = 50.0, x_hi: float = 5.0) -> float:
    """Sample the growth bounds |f(u)| <= M(1+|u|^q) and
    |g(x,t,v,z)| <= M(1+|v| sqrt(a(x)) + |z|) on a test lattice.

    Returns the worst bound ratio (<= 1 means the bounds hold on the lattice);
    raises when they are violated.
    """
    u = np.linspace(-u_scale, u_scale, n)
    f_ratio = float(np.max(np.abs(np.asarray(model.f(u), dtype=float))
                           / (model.M * (1.0 + np.abs(u) ** model.q))))
    rng = np.random.default_rng(0)
    x = rng.uniform(1e-3, x_hi, n)
    t = rng.uniform(0.0, 2.0, n)
    v = rng.uniform(-u_scale, u_scale, n)
    z = rng.uniform(-u_scale, u_scale, n)
    g_vals = np.abs(np.asarray(model.g(x, t, v, z), dtype=float))
    g_ratio = float(np.max(
        g_vals / (model.M * (1.0 + np.abs(v) * np.sqrt(np.asarray(model.a(x), dtype=float))
                             + np.abs(z)))))
    worst = max(f_ratio, g_ratio)
    if worst > 1.0 + 1e-9:
        raise ValueError(
            f"perturbation growth bounds violated on the test lattice "
            f"(worst ratio {worst:.3g})")
    return worst


@dataclass(frozen=True)
class AdmissibilityReport:
    sup_all: float
    sup_near_origin: float
    bound: float
    passed: bool
    lattice: np.ndarray

    def __str__(self):
        verdict = "pass" if self.passed else "FAIL"
        return (f"admissibility sup={self.sup_all:.6g} on lattice, "
                f"sup(0,1]={self.sup_near_origin:.6g}, bound M={self.bound:g}: {verdict}")


def check_admissibility(model: CoefficientModel, x_max: float,
                        samples: int = 256) -> AdmissibilityReport:
    """Sample the bounded-defect condition on a log lattice in (0, x_max].

    The condition is analytic; this is a spot check.  It is reported both
    over the whole lattice and over (0, 1] since the bound is only needed
    near the origin.
    """
    if samples < 2:
        raise ValueError("need at least 2 lattice samples")
    lattice = np.geomspace(1e-8 * max(x_max, 1.0), x_max, samples)
    a_vals = np.asarray(model.a(lattice), dtype=float)
    if np.any(a_vals <= 0) or not np.all(np.isfinite(a_vals)):
        raise ValueError("a(x) <= 0 or non-finite on the admissibility lattice")
    defect = np.abs(np.asarray(model.admissibility_defect(lattice), dtype=float))
    near = lattice <= 1.0
    sup_all = float(np.max(defect))
    sup_near = float(np.max(defect[near])) if np.any(near) else 0.0
    return AdmissibilityReport(
        sup_all=sup_all,
        sup_near_origin=sup_near,
        bound=model.M,
        passed=sup_all <= model.M,
        lattice=lattice,
    )
