"""Independent oracles used by the tests.

These deliberately avoid the library's own discretization choices: the
reference wave solver works in the original x variable on its own grid, and
the quadrature oracle is scipy's adaptive integrator.
"""

import numpy as np


def solve_direct_x(a, N, p, u0_fn, x_lo, x_hi, hx, t_end, cfl=0.9):
    """Second-order reference discretization of

        u_tt = a(x) (u_xx + (N-1)/x u_x) + |u|^(p-1) u

    on [x_lo, x_hi] with frozen Dirichlet ends; valid wherever the comparison
    region's domain of dependence stays inside (x_lo, x_hi).
    """
    x = np.arange(x_lo, x_hi + hx / 2, hx)
    u = u0_fn(x)
    v = np.zeros_like(u)
    a_x = a(x)
    dt = cfl * hx / np.sqrt(np.max(a_x))

    def accel(u):
        A = np.zeros_like(u)
        A[1:-1] = (a_x[1:-1] * (u[2:] - 2 * u[1:-1] + u[:-2]) / hx**2
                   + a_x[1:-1] * (N - 1) / x[1:-1] * (u[2:] - u[:-2]) / (2 * hx)
                   + np.abs(u[1:-1]) ** (p - 1) * u[1:-1])
        return A

    t = 0.0
    A = accel(u)
    while t < t_end - 1e-12:
        step = min(dt, t_end - t)
        vh = v + 0.5 * step * A
        u = u + step * vh
        A_new = accel(u)
        v = vh + 0.5 * step * A_new
        A = A_new
        t += step
    return x, u


def flat_ode_series(p, T, t_grid):
    """Exact space-flat blow-up solution sampled on a time grid."""
    from degenwave.solver import kappa0

    return kappa0(p) * (T - np.asarray(t_grid)) ** (-2.0 / (p - 1.0))


def lorentz_solution(p, d_hat, T_c, X_c):
    """Exact traveling blow-up solution of the flat d=1 equation."""
    from degenwave.solver import kappa0

    amp = kappa0(p) * (1.0 - d_hat**2) ** (1.0 / (p - 1.0))

    def u(X, t):
        base = T_c - t + d_hat * (np.asarray(X, dtype=float) - X_c)
        return amp * base ** (-2.0 / (p - 1.0))

    return u
