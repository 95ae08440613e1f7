import math

import numpy as np
import pytest

from degenwave import constant_model
from degenwave.energy import (
    E0_functional,
    NonIntegrableWeightError,
    beta_integral_closed_form,
    dissipation_identity_check,
    energy_series,
    full_energy,
    gamma_exponent,
    lyapunov_violations,
    origin_energy,
    quadrature_rule,
    weighted_norm,
)
from degenwave.similarity import SimilarityFrame, frames_from_solution
from degenwave.solver import kappa0

from helpers import lorentz_solution

K0 = kappa0(3.0)


def make_frame(y, w, w_s=None, w_y=None, p=3.0, d=1, origin=False, s=2.0):
    w = np.asarray(w, dtype=float)
    if w_y is None:
        w_y = np.gradient(w, y)
    if w_s is None:
        w_s = np.zeros_like(w)
    return SimilarityFrame(x0=1.0, X0=0.0 if origin else 1.0, T0=1.0, s=s,
                           y=np.asarray(y, dtype=float), w=w,
                           w_s=np.asarray(w_s, dtype=float),
                           w_y=np.asarray(w_y, dtype=float), p=p, d=d,
                           origin=origin)


def const_frame(c, p=3.0, d=1, origin=False, s=2.0, n=401):
    g = 1e-6
    y = np.linspace(g, 1 - g, n) if origin else np.linspace(-1 + g, 1 - g, n)
    return make_frame(y, np.full(n, c), p=p, d=d, origin=origin, s=s)


class TestQuadrature:
    def test_rho_mass_matches_beta(self):
        for p in (2.0, 3.0, 5.0):
            for d in (2, 3):
                rule = quadrature_rule("rho", p, d, 128)
                assert abs(np.sum(rule.weights)
                           - beta_integral_closed_form("rho", p, d)) < 1e-10
                rule0 = quadrature_rule("rho0", p, d, 128)
                assert abs(np.sum(rule0.weights)
                           - beta_integral_closed_form("rho0", p, d)) < 1e-10

    def test_polynomial_exactness_degree_10(self):
        for p in (2.0, 3.0):
            rule = quadrature_rule("rho", p, 2, 128)
            for k in range(11):
                got = float(np.dot(rule.weights, rule.nodes**k))
                assert abs(got - beta_integral_closed_form("rho", p, 2, k)) < 1e-10

    def test_rho0_moments(self):
        for p, d in ((2.0, 2), (3.0, 3), (5.0, 2)):
            rule = quadrature_rule("rho0", p, d, 128)
            for k in range(0, 9):
                got = float(np.dot(rule.weights, rule.nodes**k))
                assert abs(got - beta_integral_closed_form("rho0", p, d, k)) < 1e-10

    def test_weights_positive(self):
        for kind in ("rho", "rho0", "rho_over", "rho0_times", "r_power"):
            rule = quadrature_rule(kind, 3.0, 2, 64)
            assert np.all(rule.weights > 0)

    def test_non_integrable_weight_rejected(self):
        # 2/(p-1) - (d-1)/2 <= -1 diverges at the outer endpoint
        with pytest.raises(NonIntegrableWeightError):
            quadrature_rule("rho0", 9.0, 4, 64)


class TestWeightedNorm:
    def test_constant_one_L2_rho(self):
        f = const_frame(1.0)
        assert weighted_norm(f, "L2_rho") == pytest.approx(math.sqrt(4.0 / 3.0),
                                                           rel=1e-10)

    def test_zero(self):
        f = const_frame(0.0)
        for kind in ("L2_rho", "H1_rho", "L2_rd", "H1_plain"):
            assert weighted_norm(f, kind) == 0.0

    def test_linear_profile(self):
        g = 1e-6
        y = np.linspace(-1 + g, 1 - g, 801)
        f = make_frame(y, y.copy())
        assert weighted_norm(f, "L2_rho") == pytest.approx(math.sqrt(4.0 / 15.0),
                                                           rel=1e-8)

    def test_h1_adds_gradient(self):
        g = 1e-6
        y = np.linspace(-1 + g, 1 - g, 801)
        f = make_frame(y, y.copy())
        # |y|_L2rho^2 = 4/15, gradient = 1 with mass 4/3
        assert weighted_norm(f, "H1_rho") == pytest.approx(
            math.sqrt(4.0 / 15.0 + 4.0 / 3.0), rel=1e-8)

    def test_unknown_kind(self):
        with pytest.raises(ValueError, match="unknown norm kind"):
            weighted_norm(const_frame(1.0), "L3_rho")


class TestE0:
    def test_kappa0_level(self):
        # bracket collapses to kappa0^2/(p-1): 2/2 * 4/3 = 4/3 at p = 3
        f = const_frame(K0)
        assert E0_functional(f, 1.0) == pytest.approx(4.0 / 3.0, rel=1e-12)

    def test_zero(self):
        assert E0_functional(const_frame(0.0), 1.0) == 0.0

    def test_scaled_kappa0_below_quadratic_prediction(self):
        f = const_frame(1.1 * K0)
        quadratic_only = (3.0 + 1.0) / (3.0 - 1.0) ** 2 * (1.1 * K0) ** 2 * (4.0 / 3.0)
        assert E0_functional(f, 1.0) < quadratic_only


class TestFullEnergy:
    def test_unperturbed_constant_beta(self):
        model = constant_model(N=1, p=3.0)
        rep = full_energy(const_frame(K0), model)
        assert rep.I == 0.0 and rep.J == 0.0 and rep.K == pytest.approx(0.0, abs=1e-15)
        assert rep.E == pytest.approx(rep.E0)
        assert rep.dissipation == pytest.approx(0.0, abs=1e-15)

    def test_gamma(self):
        assert gamma_exponent(3.0, 1.0) == pytest.approx(0.5)
        assert gamma_exponent(3.0, 2.5) == pytest.approx(0.25)

    def test_beta_gradient_odd_integrand_cancels(self):
        # beta(X) = 1 + 0.1 X, X0 = 1, w constant: the J-integrand is odd
        model = constant_model(N=1, p=3.0, b=lambda x: 1.0 + 0.1 * x)
        f = const_frame(K0, s=3.0)
        rep = full_energy(f, model)
        assert abs(rep.J) < 1e-12

    def test_H_definition(self):
        model = constant_model(N=1, p=3.0, q=1.0)
        f = const_frame(K0, s=2.0)
        rep = full_energy(f, model, mu=1.0)
        gamma = 0.5
        expect = rep.E * math.exp((3.0 + 3.0) / (2 * gamma) * math.exp(-gamma * 2.0)) \
            + 1.0 * math.exp(-2 * gamma * 2.0)
        assert rep.H == pytest.approx(expect, rel=1e-12)

    def test_origin_frame_rejected(self):
        model = constant_model(N=2, p=3.0)
        with pytest.raises(ValueError, match="origin"):
            full_energy(const_frame(K0, d=2, origin=True), model)


class TestDissipationIdentities:
    def test_flat_wrong_vertex_frames(self):
        # exact solution, deliberately wrong vertex time: w_s != 0 everywhere
        model = constant_model(N=2, p=3.0)
        u = lambda X, t: np.full_like(np.asarray(X, dtype=float), K0 / (1.0 - t))
        s_vals = np.arange(1.2, 2.2, 0.01)
        frames = frames_from_solution(u, model, x0=1.0, T0=0.9, s_values=s_vals)
        reports = energy_series(frames, model)
        r1, r2 = dissipation_identity_check(reports, frames, model)
        assert r1 <= 1e-3
        assert r2 <= 1e-3

    def test_lorentz_frames(self):
        model = constant_model(N=1, p=3.0)
        u = lorentz_solution(3.0, 0.3, 1.0, 1.0)
        s_vals = np.arange(1.5, 2.5, 0.005)
        frames = frames_from_solution(u, model, x0=1.2, T0=0.95,
                                      s_values=s_vals, n_y=513, ds=0.005)
        reports = energy_series(frames, model)
        r1, r2 = dissipation_identity_check(reports, frames, model)
        assert r1 <= 1e-3
        assert r2 <= 1e-3

    def test_all_zero_frames(self):
        model = constant_model(N=2, p=3.0)
        frames = [const_frame(0.0, d=2, s=s) for s in (2.0, 2.01, 2.02)]
        reports = energy_series(frames, model)
        r1, r2 = dissipation_identity_check(reports, frames, model)
        assert r1 == 0.0 and r2 == 0.0

    def test_unperturbed_terms_vanish(self):
        from degenwave.energy import _identity_terms

        model = constant_model(N=1, p=3.0)
        terms = _identity_terms(const_frame(K0), model)
        assert terms["intF"] == 0.0
        assert terms["int_fw"] == 0.0
        assert terms["int_G_ws"] == 0.0
        assert abs(terms["I4"]) <= 1e-12
        assert abs(terms["J_int"]) <= 1e-12

    def test_perturbed_trace_identities(self, perturbed_run):
        # f, g switched on: I2..I5 and K4..K6 alive; residuals noise-bounded
        x0 = 1.0
        reports = perturbed_run.reports(x0)
        lad = perturbed_run.ladder(x0)
        r1, r2 = dissipation_identity_check(reports, lad.frames,
                                            perturbed_run.model)
        assert r1 <= 2e-2
        assert r2 <= 0.5

    def test_effective_dimension_four_with_varying_beta(self):
        # a(x) = x with N = 3 gives d = 4 (d != N) and b(x) = 1 + 0.2 x makes
        # the reaction coefficient genuinely X-dependent, so the radial term
        # coefficient and the J correction are both exercised on a real run
        from degenwave import phi_inverse, power_law_model
        from degenwave.similarity import frame_ladder
        from degenwave.solver import SolverParams, blowup_curve, simulate

        model = power_law_model(alpha=1.0, N=3, p=2.0,
                                b=lambda x: 1.0 + 0.2 * np.asarray(x, dtype=float))
        assert model.d == 4
        h = 1.0 / 256
        params = SolverParams(h=h, X_max=2.2, cfl=0.9, t_max=2.0, guard=1e8,
                              near_dt_frac=0.02, store_frac=0.005,
                              stop_window=(0.8, 1.2), focus_X=(0.95,))
        X = params.h * np.arange(int(round(params.X_max / params.h)) + 1)
        U0 = 6.0 * np.exp(-(((X - 1.0) / 0.55) ** 2))
        trace = simulate(model, params, U0, np.zeros_like(X))
        curve = blowup_curve(trace, window=(0.82, 1.18))
        x0 = phi_inverse(model, 0.95)
        lad = frame_ladder(trace, model, x0, curve.interp_T(0.95),
                           n_y=257, ds=0.01)
        reports = energy_series(lad.frames, model)
        r1, r2 = dissipation_identity_check(reports, lad.frames, model)
        assert r1 <= 1e-2 and r2 <= 1e-2
        nv, _ = lyapunov_violations(
            reports, lad.s_min + 0.2 * (lad.s_max - lad.s_min))
        assert nv == 0
        assert max(abs(r.J) for r in reports) > 1e-3  # the correction is alive


class TestOriginEnergy:
    def test_kappa0_level_closed_form(self):
        f = const_frame(K0, d=2, origin=True)
        E00, slope = origin_energy(f, constant_model(N=2, p=3.0))
        expect = K0**2 / 2.0 * beta_integral_closed_form("rho0", 3.0, 2)
        assert E00 == pytest.approx(expect, rel=1e-10)
        assert slope == 0.0

    def test_slope_zero_when_ws_zero(self):
        f = const_frame(1.3, d=2, origin=True)
        _, slope = origin_energy(f, constant_model(N=2, p=3.0))
        assert slope == 0.0

    def test_conformal_like_cancellation(self):
        # d = 1 + 4/(p-1): the slope coefficient vanishes for any w_s
        # (p = 3 gives d = 3; the model only supplies beta here)
        g = 1e-6
        y = np.linspace(g, 1 - g, 301)
        f = SimilarityFrame(x0=0.0, X0=0.0, T0=1.0, s=2.0, y=y,
                            w=np.full(301, K0), w_s=np.sin(y),
                            w_y=np.zeros(301), p=3.0, d=3, origin=True)
        _, slope = origin_energy(f, constant_model(N=3, p=2.9, q=0.5))
        assert slope == pytest.approx(0.0, abs=1e-14)

    def test_slope_identity_on_run(self, origin_run):
        E00 = []
        slopes = []
        lad = origin_run.ladder(0.0)
        for f in lad.frames:
            e, sl = origin_energy(f, origin_run.model)
            E00.append(e)
            slopes.append(sl)
        E00 = np.array(E00)
        slopes = np.array(slopes)
        s = np.array([f.s for f in lad.frames])
        fd = np.gradient(E00, s)
        strong = np.abs(slopes) > 0.1 * np.max(np.abs(slopes))
        rel = np.abs(fd[strong] - slopes[strong]) / np.abs(slopes[strong])
        assert np.median(rel) <= 0.05
        # subconformality makes the coefficient negative: E00 non-increasing
        assert np.all(np.diff(E00) <= 1e-3 * (1.0 + np.abs(E00[:-1])))

    def test_origin_limit_is_kappa0_level(self, origin_run):
        lad = origin_run.ladder(0.0)
        E00, _ = origin_energy(lad.frames[-1], origin_run.model)
        expect = K0**2 / 2.0 * beta_integral_closed_form("rho0", 3.0, 2)
        assert E00 == pytest.approx(expect, rel=2e-2)


class TestDissipationInequality:
    def test_bound_with_fitted_constant(self, bump_run):
        # dE/ds <= (p+3)/2 e^(-gamma s) E0 - 3/(p-1) dissipation + C e^(-2 gamma s):
        # fit C on the first half of the range, validate on the second half
        p, q = bump_run.model.p, bump_run.model.q
        gamma = gamma_exponent(p, q)
        for x0 in bump_run.x0_list:
            reports = bump_run.reports(x0)
            s = np.array([r.s for r in reports])
            E = np.array([r.E for r in reports])
            E0 = np.array([r.E0 for r in reports])
            diss = np.array([r.dissipation for r in reports])
            dE = np.gradient(E, s)
            excess = (dE - (p + 3.0) / 2.0 * np.exp(-gamma * s) * E0
                      + 3.0 / (p - 1.0) * diss) * np.exp(2.0 * gamma * s)
            half = s.shape[0] // 2
            C = max(float(np.max(excess[2:half])), 0.0)
            assert np.all(excess[half:-2] <= 1.5 * C + 1e-6)

    def test_H_nonnegative_at_late_s(self, lyapunov_runs):
        for bundle in lyapunov_runs:
            for x0 in bundle.x0_list:
                reports = bundle.reports(x0)
                tail = [r.H for r in reports[-len(reports) // 4:]]
                assert min(tail) >= 0.0


class TestLyapunov:
    def test_monotone_on_flat_run(self, flat_run):
        for x0 in flat_run.x0_list:
            reports = flat_run.reports(x0)
            lad = flat_run.ladder(x0)
            nv, _ = lyapunov_violations(
                reports, lad.s_min + 0.2 * (lad.s_max - lad.s_min))
            assert nv == 0

    def test_violation_counter(self):
        reports = [type("R", (), {"H": h, "s": i * 0.1})()
                   for i, h in enumerate([3.0, 2.0, 2.5, 1.0])]
        nv, worst = lyapunov_violations(reports, 0.0, tol=1e-3)
        assert nv == 1 and worst == pytest.approx(0.5 - 1e-3 * 3.0)
