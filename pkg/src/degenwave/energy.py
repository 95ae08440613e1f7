"""Weighted norms, Lyapunov functionals and their dissipation identities.

Everything here integrates against the cone weights

    rho(y)  = (1 - y^2)^(2/(p-1))                    on (-1, 1),
    rho0(y) = (1 - y^2)^(2/(p-1) - (d-1)/2) y^(d-1)  on (0, 1),

by Gauss-Jacobi rules whose exponents match the weight exactly, so integrals
of polynomials against rho hit closed-form Beta values to machine precision.

The natural energy of a frame (w, w_s) at base coefficient beta0 is

    E0 = int ( w_s^2/2 + w_y^2 (1-y^2)/2 + (p+1)/(p-1)^2 w^2
               - beta0 |w|^(p+1)/(p+1) ) rho dy,

and the corrected Lyapunov quantity is H = E exp((p+3)/(2 gamma) e^(-gamma s))
+ mu e^(-2 gamma s) with E = E0 + I + J + K.  The ds-derivatives of E0+I+J and
of K obey exact integral identities (they follow from multiplying the frame
equation by w_s rho resp. w rho and integrating by parts); both are evaluated
here as runtime certificates against centered differences along the s-ladder.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import roots_jacobi

from .coefficients import CoefficientModel, _zero_f
from .similarity import SimilarityFrame

__all__ = [
    "NonIntegrableWeightError",
    "WeightedQuadrature",
    "quadrature_rule",
    "beta_integral_closed_form",
    "weighted_norm",
    "E0_functional",
    "EnergyReport",
    "full_energy",
    "energy_series",
    "dissipation_identity_check",
    "origin_energy",
    "lyapunov_violations",
    "gamma_exponent",
]


class NonIntegrableWeightError(ValueError):
    """The requested weight exponent is <= -1 and the integral diverges."""


@dataclass(frozen=True)
class WeightedQuadrature:
    """Nodes/weights integrating f against one of the cone weights."""

    nodes: np.ndarray
    weights: np.ndarray
    kind: str
    p: float
    d: int

    def integrate(self, values):
        return float(np.dot(self.weights, values))

    def integrate_fn(self, fn):
        return float(np.dot(self.weights, fn(self.nodes)))


def _rho_exponent(p):
    return 2.0 / (p - 1.0)


def _rho0_exponent(p, d):
    return 2.0 / (p - 1.0) - (d - 1.0) / 2.0


@lru_cache(maxsize=256)
def _rule_cached(kind, p, d, n):
    if kind in ("rho", "rho_over", "rho_times"):
        a = _rho_exponent(p) + {"rho": 0.0, "rho_over": -1.0, "rho_times": 1.0}[kind]
        if a <= -1.0:
            raise NonIntegrableWeightError(f"exponent {a:g} <= -1 for kind {kind}")
        t, w = roots_jacobi(n, a, a)
        return t, w
    if kind in ("rho0", "rho0_over", "rho0_times"):
        a0 = _rho0_exponent(p, d) + {"rho0": 0.0, "rho0_over": -1.0,
                                     "rho0_times": 1.0}[kind]
        if a0 <= -1.0:
            raise NonIntegrableWeightError(
                f"(1-y^2) exponent {a0:g} <= -1 in the origin weight")
        # weight on (0,1): (1-y)^a0 * y^(d-1) as the Jacobi pair, with the
        # analytic leftover (1+y)^a0 folded into the weights
        t, w = roots_jacobi(n, a0, float(d - 1))
        y = 0.5 * (t + 1.0)
        w = w * ((3.0 + t) / 2.0) ** a0 * 0.5 ** (a0 + d)
        return y, w
    if kind == "r_power":
        t, w = roots_jacobi(n, 0.0, float(d - 1))
        return 0.5 * (t + 1.0), w * 0.5 ** d
    if kind == "plain":
        t, w = np.polynomial.legendre.leggauss(n)
        return t, w
    if kind == "plain01":
        t, w = np.polynomial.legendre.leggauss(n)
        return 0.5 * (t + 1.0), 0.5 * w
    raise ValueError(f"unknown quadrature kind {kind!r}")


def quadrature_rule(kind: str, p: float, d: int = 1,
                    n: int = 128) -> WeightedQuadrature:
    nodes, weights = _rule_cached(kind, float(p), int(d), int(n))
    return WeightedQuadrature(nodes=nodes, weights=weights, kind=kind,
                              p=float(p), d=int(d))


def beta_integral_closed_form(kind: str, p: float, d: int = 1,
                              moment: int = 0) -> float:
    """Closed-form value of int y^moment against the weight, via Beta functions.

    kind "rho": int_{-1}^{1} y^m (1-y^2)^(2/(p-1)) dy (0 for odd m);
    kind "rho0": int_0^1 y^m (1-y^2)^(2/(p-1)-(d-1)/2) y^(d-1) dy.
    """
    from scipy.special import beta as beta_fn

    if kind == "rho":
        if moment % 2 == 1:
            return 0.0
        a = _rho_exponent(p)
        return float(beta_fn((moment + 1) / 2.0, a + 1.0))
    if kind == "rho0":
        a0 = _rho0_exponent(p, d)
        if a0 <= -1.0:
            raise NonIntegrableWeightError("origin weight not integrable")
        return float(0.5 * beta_fn((moment + d) / 2.0, a0 + 1.0))
    raise ValueError(f"no closed form for kind {kind!r}")


def _frame_values_at(frame: SimilarityFrame, nodes, which="w"):
    arr = getattr(frame, which)
    spl = CubicSpline(frame.y, arr)
    return spl(nodes)


_NORM_KINDS = {
    "L2_rho": ("rho", False), "H1_rho": ("rho", True),
    "L2_rho0": ("rho0", False), "H1_rho0": ("rho0", True),
    "L2_rd": ("r_power", False), "H1_rd": ("r_power", True),
    "L2_plain": ("plain", False), "H1_plain": ("plain", True),
}


def weighted_norm(frame: SimilarityFrame, kind: str, n: int = 128) -> float:
    """Weighted L2/H1 norm of a frame's w (H1 adds the w_y term, same weight)."""
    if kind not in _NORM_KINDS:
        raise ValueError(f"unknown norm kind {kind!r}; have {sorted(_NORM_KINDS)}")
    base, with_grad = _NORM_KINDS[kind]
    rule = quadrature_rule(base, frame.p, frame.d, n)
    wv = _frame_values_at(frame, rule.nodes, "w")
    total = rule.integrate(wv**2)
    if with_grad:
        gv = _frame_values_at(frame, rule.nodes, "w_y")
        total += rule.integrate(gv**2)
    return math.sqrt(max(total, 0.0))


def E0_functional(frame: SimilarityFrame, beta_at_X0: float,
                  n: int = 128) -> float:
    """Natural energy of a frame against the outside-origin weight rho."""
    p = frame.p
    rho = quadrature_rule("rho", p, frame.d, n)
    rho_t = quadrature_rule("rho_times", p, frame.d, n)
    w = _frame_values_at(frame, rho.nodes, "w")
    ws = _frame_values_at(frame, rho.nodes, "w_s")
    wy = _frame_values_at(frame, rho_t.nodes, "w_y")
    val = rho.integrate(0.5 * ws**2
                        + (p + 1.0) / (p - 1.0) ** 2 * w**2
                        - beta_at_X0 / (p + 1.0) * np.abs(w) ** (p + 1.0))
    val += rho_t.integrate(0.5 * wy**2)
    return float(val)


def gamma_exponent(p: float, q: float) -> float:
    return min(0.5, (p - q) / (p - 1.0))


@dataclass
class EnergyReport:
    """All functional values of one frame plus identity residuals."""

    s: float
    E0: float
    I: float
    J: float
    K: float
    E: float
    H: float
    dissipation: float
    identity_residual_E0IJ: float = math.nan
    identity_residual_K: float = math.nan

    @property
    def res1(self):
        return self.identity_residual_E0IJ

    @property
    def res2(self):
        return self.identity_residual_K


def full_energy(frame: SimilarityFrame, model: CoefficientModel,
                mu: float = 1.0, n: int = 128) -> EnergyReport:
    """E0, the corrections I, J, K, the combined E and the Lyapunov H.

    I uses F(u) = int_0^u f; its argument e^(2s/(p-1)) w is evaluated under an
    overflow clamp justified by |F(u)| <= M(|u| + |u|^(q+1)/(q+1)).
    """
    if frame.origin:
        raise ValueError("full_energy applies outside the origin; "
                         "use origin_energy for x0 = 0")
    p, q, s = model.p, model.q, frame.s
    gamma = gamma_exponent(p, q)
    beta0 = float(model.beta(frame.X0))
    rho = quadrature_rule("rho", p, frame.d, n)
    rho_o = quadrature_rule("rho_over", p, frame.d, n)

    w = _frame_values_at(frame, rho.nodes, "w")
    ws = _frame_values_at(frame, rho.nodes, "w_s")
    E0 = E0_functional(frame, beta0, n)

    I = 0.0
    if model.f is not _zero_f or model.F is not None:
        efac = math.exp(2.0 * s / (p - 1.0))
        u = np.clip(efac * w, -1e150, 1e150)
        I = -math.exp(-2.0 * (p + 1.0) * s / (p - 1.0)) * rule_int(rho, model.antiderivative_F(u))
    ems = math.exp(-s)
    beta_d = np.asarray(model.beta(frame.X0 + rho.nodes * ems), dtype=float) - beta0
    J = 0.0
    if np.any(beta_d != 0.0):
        J = -1.0 / (p + 1.0) * rule_int(rho, beta_d * np.abs(w) ** (p + 1.0))
    K = -math.exp(-gamma * s) * rule_int(rho, w * ws)

    ws_o = _frame_values_at(frame, rho_o.nodes, "w_s")
    dissipation = rule_int(rho_o, ws_o**2)

    E = E0 + I + J + K
    H = E * math.exp((p + 3.0) / (2.0 * gamma) * math.exp(-gamma * s)) \
        + mu * math.exp(-2.0 * gamma * s)
    return EnergyReport(s=s, E0=E0, I=I, J=J, K=K, E=E, H=H,
                        dissipation=dissipation)


def rule_int(rule: WeightedQuadrature, values) -> float:
    return float(np.dot(rule.weights, values))


def energy_series(frames: Sequence[SimilarityFrame], model: CoefficientModel,
                  mu: float = 1.0, n: int = 128) -> list:
    return [full_energy(f, model, mu=mu, n=n) for f in frames]


def _identity_terms(frame: SimilarityFrame, model: CoefficientModel,
                    n: int = 128) -> dict:
    """All integrals entering the two dissipation identities at one frame."""
    p, q = model.p, model.q
    s = frame.s
    d = frame.d
    gamma = gamma_exponent(p, q)
    beta0 = float(model.beta(frame.X0))
    ems = math.exp(-s)

    rho = quadrature_rule("rho", p, d, n)
    rho_o = quadrature_rule("rho_over", p, d, n)
    rho_t = quadrature_rule("rho_times", p, d, n)

    w = _frame_values_at(frame, rho.nodes, "w")
    ws = _frame_values_at(frame, rho.nodes, "w_s")
    wy = _frame_values_at(frame, rho.nodes, "w_y")
    X = frame.X0 + rho.nodes * ems

    w_ov = _frame_values_at(frame, rho_o.nodes, "w")
    ws_ov = _frame_values_at(frame, rho_o.nodes, "w_s")
    wy_t = _frame_values_at(frame, rho_t.nodes, "w_y")
    ws_t = _frame_values_at(frame, rho_t.nodes, "w_s")

    out = {
        "A": rule_int(rho, ws**2),
        "B": rule_int(rho_t, wy_t**2),
        "C": rule_int(rho, w**2),
        "P": rule_int(rho, np.abs(w) ** (p + 1.0)),
        "W1": rule_int(rho, w * ws),
        "W2_over": rule_int(rho_o, w_ov * ws_ov * rho_o.nodes**2),
        "K3": -2.0 * rule_int(rho, ws * wy * rho.nodes),
        "diss": rule_int(rho_o, ws_ov**2),
        "I1": (d - 1.0) * ems * rule_int(rho, ws * wy / X),
        "K7": -(d - 1.0) * ems * rule_int(rho, w * wy / X),
        "beta0": beta0,
    }

    efac = math.exp(2.0 * s / (p - 1.0))
    if model.f is not _zero_f or model.F is not None:
        u = np.clip(efac * w, -1e150, 1e150)
        fu = np.asarray(model.f(u), dtype=float)
        Fu = model.antiderivative_F(u)
        out["intF"] = rule_int(rho, Fu)
        out["int_fw"] = rule_int(rho, fu * w)
    else:
        out["intF"] = 0.0
        out["int_fw"] = 0.0

    beta_X = np.asarray(model.beta(X), dtype=float)
    out["J_int"] = rule_int(rho, (beta_X - beta0) * np.abs(w) ** (p + 1.0))
    dX = 1e-6 * (1.0 + np.abs(X))
    beta_p = (np.asarray(model.beta(X + dX), dtype=float)
              - np.asarray(model.beta(X - dX), dtype=float)) / (2.0 * dX)
    out["I4"] = ems / (p + 1.0) * rule_int(
        rho, rho.nodes * beta_p * np.abs(w) ** (p + 1.0))

    if model.has_perturbations():
        amp = math.exp((p + 1.0) * s / (p - 1.0))
        Gv = np.asarray(model.G(X, frame.T0 - ems, amp * wy,
                                amp * (ws + rho.nodes * wy + 2.0 / (p - 1.0) * w)),
                        dtype=float)
        out["int_G_ws"] = rule_int(rho, Gv * ws)
        out["int_G_w"] = rule_int(rho, Gv * w)
    else:
        out["int_G_ws"] = 0.0
        out["int_G_w"] = 0.0
    return out


def dissipation_identity_check(reports: Sequence[EnergyReport],
                               frames: Sequence[SimilarityFrame],
                               model: CoefficientModel,
                               n: int = 128):
    """Certify the two exact ds-identities along an s-ladder.

    residual_1 compares a centered difference of E0 + I + J with

        -4/(p-1) int w_s^2 rho/(1-y^2) + I1 + I2 + I3 + I4 + I5,

    I1 the radial-perturbation cross term (coefficient d-1), I2/I3 the source
    terms (I3 enters with a minus sign; both vanish with f), I4 the
    beta-gradient term and I5 the G term.  residual_2 compares e^(gamma s)
    times a centered difference of K with the w-multiplied identity written as
    (p+3)/2 (E0+I+J) plus quadratic corrections and the terms K1..K8; the
    exact form carries -(p+7)/4 int w_s^2 rho and K1 with constant
    gamma + (p+3)/(p-1) - 2.  Both identities were rederived from the frame
    equation; residuals vanish to finite-difference accuracy on true solutions.

    Residuals are normalized by 1 + |lhs| and written back into the reports;
    returns (max residual_1, max residual_2) over interior ladder points.
    """
    if len(reports) < 3:
        raise ValueError("need at least 3 consecutive energy reports")
    p, q = model.p, model.q
    gamma = gamma_exponent(p, q)
    d = frames[0].d
    s_arr = np.array([r.s for r in reports])
    ds = float(np.mean(np.diff(s_arr)))
    if np.max(np.abs(np.diff(s_arr) - ds)) > 1e-9 * ds:
        raise ValueError("reports must be uniformly spaced in s")

    E0IJ = np.array([r.E0 + r.I + r.J for r in reports])
    Ks = np.array([r.K for r in reports])
    res1_max = 0.0
    res2_max = 0.0
    for i in range(1, len(reports) - 1):
        terms = _identity_terms(frames[i], model, n)
        s = reports[i].s
        e2p = math.exp(-2.0 * p * s / (p - 1.0))
        e2p1 = math.exp(-2.0 * (p + 1.0) * s / (p - 1.0))

        lhs1 = (E0IJ[i + 1] - E0IJ[i - 1]) / (2.0 * ds)
        I2 = 2.0 * (p + 1.0) / (p - 1.0) * e2p1 * terms["intF"]
        I3 = 2.0 / (p - 1.0) * e2p * terms["int_fw"]
        I5 = e2p * terms["int_G_ws"]
        rhs1 = (-4.0 / (p - 1.0) * terms["diss"]
                + terms["I1"] + I2 - I3 + terms["I4"] + I5)
        res1 = abs(lhs1 - rhs1) / (1.0 + abs(lhs1))

        lhs2 = math.exp(gamma * s) * (Ks[i + 1] - Ks[i - 1]) / (2.0 * ds)
        K1 = (gamma + (p + 3.0) / (p - 1.0) - 2.0) * terms["W1"]
        K2 = 8.0 / (p - 1.0) * terms["W2_over"]
        K4 = -e2p * terms["int_fw"]
        K5 = -e2p * terms["int_G_w"]
        K6 = (p + 3.0) / 2.0 * e2p1 * terms["intF"]
        K8 = -(p - 1.0) / (2.0 * (p + 1.0)) * terms["J_int"]
        rhs2 = ((p + 3.0) / 2.0 * E0IJ[i]
                - (p + 7.0) / 4.0 * terms["A"]
                - (p - 1.0) / 4.0 * terms["B"]
                - (p + 1.0) / (2.0 * (p - 1.0)) * terms["C"]
                - (p - 1.0) / (2.0 * (p + 1.0)) * terms["beta0"] * terms["P"]
                + K1 + K2 + terms["K3"] + K4 + K5 + K6 + terms["K7"] + K8)
        res2 = abs(lhs2 - rhs2) / (1.0 + abs(lhs2))

        reports[i].identity_residual_E0IJ = res1
        reports[i].identity_residual_K = res2
        res1_max = max(res1_max, res1)
        res2_max = max(res2_max, res2)
    return res1_max, res2_max


def origin_energy(frame: SimilarityFrame, model: CoefficientModel,
                  n: int = 128):
    """Origin functional E00 on (0, 1) with weight rho0 and its predicted
    slope (d - 1 - 4/(p-1)) int w_s^2 rho0/(1-y^2) dy.

    Under subconformality the slope coefficient is negative, so E00 decreases
    along true solutions; only the identity is asserted here.
    """
    if not frame.origin:
        raise ValueError("origin_energy expects a frame at x0 = 0")
    p, d = frame.p, frame.d
    beta0 = float(model.beta(0.0))
    rho0 = quadrature_rule("rho0", p, d, n)
    rho0_t = quadrature_rule("rho0_times", p, d, n)

    w = _frame_values_at(frame, rho0.nodes, "w")
    ws = _frame_values_at(frame, rho0.nodes, "w_s")
    wy_t = _frame_values_at(frame, rho0_t.nodes, "w_y")

    E00 = rule_int(rho0, 0.5 * ws**2
                   + (p + 1.0) / (p - 1.0) ** 2 * w**2
                   - beta0 / (p + 1.0) * np.abs(w) ** (p + 1.0))
    E00 += rule_int(rho0_t, 0.5 * wy_t**2)
    coef = d - 1.0 - 4.0 / (p - 1.0)
    if coef == 0.0:
        # conformal-like cancellation: the slope vanishes identically and the
        # divergent dissipation weight never needs to be built
        return float(E00), 0.0
    rho0_o = quadrature_rule("rho0_over", p, d, n)
    ws_o = _frame_values_at(frame, rho0_o.nodes, "w_s")
    slope = coef * rule_int(rho0_o, ws_o**2)
    return float(E00), float(slope)


def lyapunov_violations(reports: Sequence[EnergyReport], s_burn: float,
                        tol: float = 1e-3):
    """Count H-monotonicity violations beyond tol*(1+|H|) after s >= s_burn."""
    H = np.array([r.H for r in reports])
    s = np.array([r.s for r in reports])
    sel = s[:-1] >= s_burn
    dH = H[1:] - H[:-1]
    margin = tol * (1.0 + np.abs(H[:-1]))
    bad = sel & (dH > margin)
    worst = float(np.max((dH - margin)[sel])) if np.any(sel) else -math.inf
    return int(np.count_nonzero(bad)), worst
