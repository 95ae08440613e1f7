"""Dynamics of k interacting soliton centers in similarity time.

The centers obey the exponentially coupled chain

    (1/c1) dxi_i/ds = exp(-2 (xi_i - xi_(i-1))/(p-1)) - exp(-2 (xi_(i+1) - xi_i)/(p-1)),

with the boundary exponentials absent for i = 1 and i = k (the standard
multi-soliton convention; it is the one that makes the logarithmic ansatz an
exact solution).  The right-hand side telescopes, so the center of mass is
conserved.  The explicit zero-center-of-mass solution is

    xi_i(s) = (i - (k+1)/2) (p-1)/2 log s + alpha_i(p, k),

where the gap constants solve exp(-2 (alpha_(i+1)-alpha_i)/(p-1)) =
(p-1) i (k-i) / (4 c1) by telescoping the gap equations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import solve_ivp

__all__ = [
    "StepUnderflowError",
    "SolitonState",
    "ode_rhs",
    "integrate",
    "ansatz_alphas",
    "explicit_ansatz",
    "d_hat_trajectory",
]


class StepUnderflowError(RuntimeError):
    """The center ordering nearly collapsed and the integrator stalled."""


@dataclass(frozen=True)
class SolitonState:
    xi: np.ndarray
    s: float
    c1: float = 1.0
    p: float = 3.0

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float)
        object.__setattr__(self, "xi", xi)
        if xi.ndim != 1 or xi.shape[0] < 2:
            raise ValueError("need at least two ordered centers")
        if np.any(np.diff(xi) <= 0):
            raise ValueError("centers must be strictly increasing")
        if self.s <= 1.0:
            raise ValueError("similarity time must exceed 1")
        if self.c1 <= 0:
            raise ValueError("coupling constant c1 must be positive")

    @property
    def k(self):
        return self.xi.shape[0]


def _rhs(xi, c1, p):
    gaps = np.diff(xi)
    coupl = np.exp(-2.0 / (p - 1.0) * gaps)
    rhs = np.zeros_like(xi)
    rhs[1:] += coupl     # pull from the left neighbor
    rhs[:-1] -= coupl    # push from the right neighbor
    return c1 * rhs


def ode_rhs(state: SolitonState) -> np.ndarray:
    """Velocities of the centers; the sum telescopes to zero."""
    return _rhs(state.xi, state.c1, state.p)


def integrate(state: SolitonState, s_end: float, tol: float = 1e-10,
              n_samples: int = 200):
    """Adaptive Runge-Kutta integration, sampled logarithmically in s.

    Returns a list of SolitonState.  Raises StepUnderflowError when the
    ordering nearly collapses (the coupling then blows up and the step
    control stalls).
    """
    if s_end <= state.s:
        raise ValueError("s_end must exceed the starting time")
    s_eval = np.geomspace(state.s, s_end, n_samples)

    def fun(s, xi):
        return _rhs(xi, state.c1, state.p)

    def gap_collapse(s, xi):
        return float(np.min(np.diff(xi))) - 1e-8

    gap_collapse.terminal = True
    sol = solve_ivp(fun, (state.s, s_end), state.xi, method="RK45",
                    rtol=tol, atol=tol, t_eval=s_eval, events=gap_collapse,
                    dense_output=False)
    if sol.status == 1:
        raise StepUnderflowError(
            f"center ordering collapsed near s={sol.t_events[0][0]:g}")
    if not sol.success:
        raise RuntimeError(f"integration failed: {sol.message}")
    return [replace(state, xi=sol.y[:, i], s=float(sol.t[i]))
            for i in range(sol.t.shape[0])]


def ansatz_alphas(k: int, p: float, c1: float = 1.0) -> np.ndarray:
    """Zero-center-of-mass gap constants of the logarithmic solution.

    Telescoping the gap equations gives the interior coupling values
    E_i = c1 exp(-2 Delta_i/(p-1)) = (p-1) i (k-i)/4, 1 <= i <= k-1.
    """
    if k < 2:
        raise ValueError("need k >= 2 solitons")
    i = np.arange(1, k)
    deltas = 0.5 * (p - 1.0) * np.log(4.0 * c1 / ((p - 1.0) * i * (k - i)))
    alphas = np.concatenate([[0.0], np.cumsum(deltas)])
    return alphas - np.mean(alphas)


def explicit_ansatz(k: int, p: float, c1: float, s) -> np.ndarray:
    """Centers of the explicit solution at time(s) s (> 1).

    Shape (k,) for scalar s, (len(s), k) otherwise.
    """
    s = np.asarray(s, dtype=float)
    if np.any(s <= 1.0):
        raise ValueError("the log ansatz needs s > 1")
    scalar = s.ndim == 0
    alphas = ansatz_alphas(k, p, c1)
    i = np.arange(1, k + 1)
    drift = (i - (k + 1) / 2.0) * (p - 1.0) / 2.0
    out = drift[None, :] * np.log(np.atleast_1d(s))[:, None] + alphas[None, :]
    return out[0] if scalar else out


def d_hat_trajectory(xi_values, xi0_shift: float):
    """Lorentz parameters -tan(xi + xi0) along a center trajectory.

    Returns (d_hat, boundary_mask); boundary_mask flags samples where
    |d_hat| >= 1 (the soliton family degenerates there).  Raises when any
    argument reaches +-pi/2, where tan is undefined.
    """
    arg = np.asarray(xi_values, dtype=float) + xi0_shift
    if np.any(np.abs(arg) >= math.pi / 2.0):
        raise ValueError("|xi + xi0| reached pi/2; tan is undefined there")
    d_hat = -np.tan(arg)
    return d_hat, np.abs(d_hat) >= 1.0 - 1e-12
