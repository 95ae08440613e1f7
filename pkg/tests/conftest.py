"""Shared blow-up runs for the test suite.

Simulations are expensive relative to the analyses, so each configured run is
built once per session and its curve, frame ladders and energy series are
cached on the bundle.
"""

import numpy as np
import pytest

from degenwave import constant_model, power_law_model
from degenwave.coefficients import perturbation_family
from degenwave.energy import energy_series
from degenwave.similarity import frame_ladder
from degenwave.solver import SolverParams, blowup_curve, kappa0, simulate


class RunBundle:
    """One solved blow-up run plus lazily cached analyses."""

    def __init__(self, name, model, params, U0, V0, x0_list, window):
        self.name = name
        self.model = model
        self.params = params
        self.x0_list = x0_list
        self.trace = simulate(model, params, U0, V0)
        self.curve = blowup_curve(self.trace, window=window)
        self._ladders = {}
        self._reports = {}

    def ladder(self, x0, **kw):
        key = (x0, tuple(sorted(kw.items())))
        if key not in self._ladders:
            X0 = self.model.phi(x0)
            T0 = self.curve.interp_T(X0) if X0 > 0 else self.curve.T[0]
            self._ladders[key] = frame_ladder(self.trace, self.model, x0, T0, **kw)
        return self._ladders[key]

    def reports(self, x0):
        if x0 not in self._reports:
            lad = self.ladder(x0)
            self._reports[x0] = energy_series(lad.frames, self.model)
        return self._reports[x0]


@pytest.fixture(scope="session")
def flat_run():
    """Exact flat ODE data, p=3, a(x)=x (N=2, d=2), h=1/512, T=1."""
    model = power_law_model(alpha=1.0, N=2, p=3.0)
    params = SolverParams(h=1.0 / 512, X_max=2.0, cfl=0.9, t_max=2.0,
                          guard=1e12, near_dt_frac=0.02, store_frac=0.005)
    k0 = kappa0(3.0)
    return RunBundle("flat_p3_d2", model, params, k0, k0,
                     x0_list=(0.2, 0.25, 0.3), window=None)


@pytest.fixture(scope="session")
def flat_transient_run():
    """Flat data off the exact ODE family (amplitude x1.3), p=3, d=2.

    The genuine transient decays fast; a tight near-blow-up dt keeps the
    fitted-T noise floor below it across the resolved s-range."""
    model = constant_model(N=2, p=3.0)
    params = SolverParams(h=1.0 / 512, X_max=2.0, cfl=0.9, t_max=3.0,
                          guard=1e12, near_dt_frac=0.01, store_frac=0.005)
    k0 = kappa0(3.0)
    return RunBundle("flat_transient", model, params, 1.3 * k0, 2.0 * 1.3 * k0,
                     x0_list=(0.8, 1.0, 1.2), window=None)


@pytest.fixture(scope="session")
def bump_run():
    """Gaussian bump, d=2, blows up near X=1."""
    model = constant_model(N=2, p=3.0)
    params = SolverParams(h=1.0 / 256, X_max=2.2, cfl=0.9, t_max=2.0,
                          guard=1e6, near_dt_frac=0.05, store_frac=0.005,
                          stop_window=(0.75, 1.3), focus_X=(0.9, 1.0, 1.15))
    n = int(round(params.X_max / params.h)) + 1
    X = params.h * np.arange(n)
    U0 = 5.0 * np.exp(-(((X - 1.0) / 0.6) ** 2))
    return RunBundle("bump_d2", model, params, U0, np.zeros_like(X),
                     x0_list=(0.9, 1.0, 1.15), window=(0.78, 1.28))


@pytest.fixture(scope="session")
def seed_run():
    """Lorentz-soliton seed, d=1: exact tilted blow-up line T' = 0.25."""
    model = constant_model(N=1, p=3.0)
    params = SolverParams(h=1.0 / 256, X_max=2.6, cfl=0.9, t_max=2.0,
                          guard=1e6, near_dt_frac=0.05, store_frac=0.005,
                          stop_window=(0.9, 1.5), focus_X=(1.0, 1.2, 1.4))
    n = int(round(params.X_max / params.h)) + 1
    X = params.h * np.arange(n)
    dh, T0, c = 0.25, 0.8, 1.0
    base = T0 + dh * (X - c)
    amp = kappa0(3.0) * (1.0 - dh**2) ** 0.5
    bundle = RunBundle("seed_d1", model, params, amp / base, amp / base**2,
                       x0_list=(1.0, 1.2, 1.4), window=(0.92, 1.48))
    bundle.seed_d_hat = dh
    return bundle


@pytest.fixture(scope="session")
def perturbed_run():
    """Bump run with the bounded perturbation family f, g switched on
    (d=1, subcubic reaction for exponent coverage)."""
    f, g, F = perturbation_family(M=0.2, q=1.0)
    model = constant_model(N=1, p=2.5, q=1.0, M=0.2, f=f, g=g, F=F)
    params = SolverParams(h=1.0 / 256, X_max=2.2, cfl=0.9, t_max=2.0,
                          guard=1e6, near_dt_frac=0.05, store_frac=0.005,
                          stop_window=(0.75, 1.3), focus_X=(0.9, 1.0, 1.15))
    n = int(round(params.X_max / params.h)) + 1
    X = params.h * np.arange(n)
    U0 = 5.0 * np.exp(-(((X - 1.0) / 0.6) ** 2))
    return RunBundle("bump_perturbed_d1", model, params, U0, np.zeros_like(X),
                     x0_list=(0.9, 1.0, 1.15), window=(0.78, 1.28))


@pytest.fixture(scope="session")
def origin_run():
    """Even bump centered at the origin, d=2: frames at x0 = 0."""
    model = constant_model(N=2, p=3.0)
    params = SolverParams(h=1.0 / 256, X_max=1.6, cfl=0.9, t_max=2.0,
                          guard=1e6, near_dt_frac=0.05, store_frac=0.005,
                          stop_window=(0.0, 0.3), focus_X=(0.0,))
    n = int(round(params.X_max / params.h)) + 1
    X = params.h * np.arange(n)
    U0 = 5.0 * np.exp(-((X / 0.5) ** 2))
    return RunBundle("bump_origin_d2", model, params, U0, np.zeros_like(X),
                     x0_list=(0.0,), window=(0.0, 0.35))


@pytest.fixture(scope="session")
def lyapunov_runs(flat_run, flat_transient_run, bump_run, seed_run, perturbed_run):
    return [flat_run, flat_transient_run, bump_run, seed_run, perturbed_run]
