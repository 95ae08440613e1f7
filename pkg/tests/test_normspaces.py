import math

import numpy as np
import pytest

from degenwave.normspaces import (
    RadialFunction,
    crown_packing_count,
    equivalence_check,
    norm_A,
    norm_B,
    sphere_ball_intersection,
    unit_ball_volume,
)


def radial(fn, d, R=24.0, h=0.01):
    return RadialFunction.from_callable(fn, d, R=R, h=h)


class TestNormA:
    def test_constant_d2_is_disk_area(self):
        u = radial(np.ones_like, 2)
        assert norm_A(u) == pytest.approx(math.pi, rel=1e-4)

    def test_constant_d3_is_ball_volume(self):
        u = radial(np.ones_like, 3, R=10.0)
        assert norm_A(u) == pytest.approx(4.0 * math.pi / 3.0, rel=1e-4)

    def test_zero(self):
        assert norm_A(radial(np.zeros_like, 2, R=5.0)) == 0.0

    def test_grid_requirement(self):
        u = RadialFunction.from_callable(np.ones_like, 2, R=5.0, h=0.05)
        with pytest.raises(ValueError, match="resolve unit balls"):
            norm_A(u)

    def test_intersection_measure_consistency(self):
        # integrating the slice measure over r recovers the ball volume;
        # the c = 0 branch has a jump at r = 1, so trapezoid is only O(h) there
        r = np.arange(0.0, 6.0, 0.002)
        for d in (2, 3, 4):
            for c in (0.0, 0.7, 2.5):
                w = sphere_ball_intersection(r, c, d)
                rel = 5e-3 if c == 0.0 else 1e-4
                assert np.trapezoid(w, r) == pytest.approx(unit_ball_volume(d),
                                                           rel=rel)


class TestNormB:
    def test_constant_d2(self):
        u = radial(np.ones_like, 2)
        assert norm_B(u) == pytest.approx(2.0, rel=1e-10)

    def test_zero(self):
        assert norm_B(radial(np.zeros_like, 2, R=5.0)) == 0.0

    def test_indicator_window(self):
        u = radial(lambda r: (r <= 1.0).astype(float), 2, R=10.0)
        assert norm_B(u) == pytest.approx(0.5, abs=0.01)

    def test_needs_unit_window(self):
        u = RadialFunction.from_callable(np.ones_like, 2, R=1.5, h=0.01)
        with pytest.raises(ValueError, match="R >= 2"):
            norm_B(u)


class TestHomogeneityMonotonicity:
    def test_quadratic_scaling(self):
        u = radial(lambda r: np.exp(-((r - 3.0) ** 2)), 2, R=10.0)
        for lam in (0.5, 2.0, 7.0):
            assert norm_A(u.scaled(lam)) == pytest.approx(lam**2 * norm_A(u), rel=1e-12)
            assert norm_B(u.scaled(lam)) == pytest.approx(lam**2 * norm_B(u), rel=1e-12)

    def test_pointwise_domination_orders_norms(self):
        small = radial(lambda r: np.exp(-(r**2)), 3, R=8.0)
        big = radial(lambda r: np.exp(-(r**2) / 4.0), 3, R=8.0)
        assert norm_A(small) <= norm_A(big)
        assert norm_B(small) <= norm_B(big)


class TestEquivalence:
    def test_constants_ratio(self):
        fam = [radial(np.ones_like, 2)]
        rep = equivalence_check(fam, 2)
        assert rep.ratio_min == pytest.approx(math.pi / 2.0, rel=1e-4)
        assert rep.ratio_max == rep.ratio_min

    def test_bumps_near_and_far(self):
        fam = [radial(lambda r: np.exp(-((r - 1.0) ** 2) / 0.25), 3, R=24.0),
               radial(lambda r: np.exp(-((r - 10.0) ** 2) / 0.25), 3, R=24.0)]
        rep = equivalence_check(fam, 3)
        assert rep.ratio_max / rep.ratio_min < 100.0

    def test_gaussian_family_bounded(self):
        fam = [radial(lambda r, s=s: np.exp(-((r / s) ** 2)), 2, R=24.0)
               for s in (0.5, 1.0, 2.0, 4.0)]
        rep = equivalence_check(fam, 2)
        assert np.isfinite(rep.ratio_max) and rep.ratio_min > 0

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            equivalence_check([radial(np.ones_like, 2)], 3)

    def test_degenerate_family(self):
        with pytest.raises(ValueError, match="degenerate"):
            equivalence_check([radial(np.zeros_like, 2, R=5.0)], 2)


class TestCrownPacking:
    def test_count_over_radius_approaches_pi(self):
        vals = {r0: crown_packing_count(r0) / r0 for r0 in (10, 50, 100)}
        assert abs(vals[100] - math.pi) <= 0.05
        assert abs(vals[50] - math.pi) <= 0.05
        assert abs(vals[10] - math.pi) <= 0.15
