import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nvmagsim.errors import InvalidArgument
from nvmagsim.nvmodel import (
    NV_AXES,
    SpinSystemParams,
    lockin_lineshape,
    lorentzian,
    odmr_spectrum,
    project_field,
    saturation_factors,
    spectrum_values,
    transition_frequencies,
)

from conftest import isolated_line_set

UT = 1e-6  # tesla


class TestAxes:
    def test_unit_norm(self):
        norms = np.linalg.norm(NV_AXES, axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-12)

    def test_pairwise_dot(self):
        g = NV_AXES @ NV_AXES.T
        off = g[~np.eye(4, dtype=bool)]
        np.testing.assert_allclose(off, -1.0 / 3.0, atol=1e-12)


class TestProjectField:
    def test_zero_field(self):
        np.testing.assert_array_equal(project_field((0.0, 0.0, 0.0)), np.zeros(4))

    def test_field_along_first_axis(self):
        # oracle: direct dot products of the fixed unit axes
        b = 100 * UT * np.array([1.0, 1.0, 1.0]) / np.sqrt(3.0)
        proj = project_field(b)
        expected = np.array([100.0, -100.0 / 3.0, -100.0 / 3.0, -100.0 / 3.0]) * UT
        np.testing.assert_allclose(proj, expected, rtol=1e-12)

    def test_field_along_z(self):
        proj = project_field((0.0, 0.0, 100 * UT))
        np.testing.assert_allclose(np.abs(proj), 100 * UT / np.sqrt(3.0), rtol=1e-12)

    def test_rejects_nonfinite(self):
        with pytest.raises(InvalidArgument):
            project_field((np.nan, 0.0, 0.0))

    def test_rejects_large_field(self):
        with pytest.raises(InvalidArgument):
            project_field((0.02, 0.0, 0.0))


class TestTransitionFrequencies:
    def test_zero_field_degenerate_triplet(self):
        p = SpinSystemParams()
        r = transition_frequencies(p, (0.0, 0.0, 0.0))
        centers = np.unique(np.round(r.centers, 3))
        np.testing.assert_allclose(
            centers, [2.867842e9, 2.870000e9, 2.872158e9], atol=1e-3
        )

    def test_branch_splitting_100ut(self):
        # field along one NV axis puts |B_i| = 100 uT on that axis
        p = SpinSystemParams()
        b = 100 * UT * NV_AXES[0]
        r = transition_frequencies(p, b)
        alpha = [ln for ln in r.lines if ln.axis == "alpha" and ln.m_i == 0]
        split = max(ln.center for ln in alpha) - min(ln.center for ln in alpha)
        assert split == pytest.approx(5.6048e6, rel=1e-12)

    def test_zero_projection_axis_collapses(self):
        # B perpendicular to the alpha axis: its 6 lines collapse onto 3 centers
        p = SpinSystemParams()
        b = 50 * UT * np.array([1.0, -1.0, 0.0]) / np.sqrt(2.0)
        assert abs(project_field(b)[0]) < 1e-18
        r = transition_frequencies(p, b)
        alpha_centers = {round(ln.center, 3) for ln in r.lines if ln.axis == "alpha"}
        assert len(alpha_centers) == 3

    def test_sorted_and_complete(self):
        p = SpinSystemParams()
        r = transition_frequencies(p, (30 * UT, -20 * UT, 55 * UT))
        assert len(r.lines) == 24
        assert np.all(np.diff(r.centers) >= 0)

    def test_branch_symmetry_invariant(self):
        p = SpinSystemParams()
        r = transition_frequencies(p, (30 * UT, -20 * UT, 55 * UT))
        for axis in ("alpha", "beta", "psi", "omega"):
            for m_i in (-1, 0, 1):
                pair = [ln.center for ln in r.lines if ln.axis == axis and ln.m_i == m_i]
                mid = 0.5 * (pair[0] + pair[1])
                assert abs(mid - (p.d_zfs + m_i * p.a_hf)) < 1e-3

    @given(
        bx=st.floats(-80e-6, 80e-6),
        by=st.floats(-80e-6, 80e-6),
        bz=st.floats(-80e-6, 80e-6),
    )
    @settings(max_examples=50, deadline=None)
    def test_field_negation_invariance(self, bx, by, bz):
        p = SpinSystemParams()
        plus = transition_frequencies(p, (bx, by, bz)).centers
        minus = transition_frequencies(p, (-bx, -by, -bz)).centers
        np.testing.assert_allclose(plus, minus, rtol=0, atol=1e-6)


class TestSaturation:
    def test_at_p_sat(self):
        p = SpinSystemParams(contrast=0.0153, hwhm=617e3, p_sat=10.0)
        c_eff, w_eff = saturation_factors(p, 10.0)
        assert c_eff == pytest.approx(0.0153 / 2.0)
        assert w_eff == pytest.approx(617e3 * np.sqrt(2.0))

    def test_low_power_limits(self):
        p = SpinSystemParams()
        c_eff, w_eff = saturation_factors(p, -40.0)
        assert c_eff < p.contrast * 2e-4
        assert w_eff == pytest.approx(p.hwhm, rel=1e-4)


class TestOdmrSpectrum:
    def test_far_off_resonance_baseline(self):
        p = SpinSystemParams()
        r = transition_frequencies(p, (0.0, 0.0, 50 * UT))
        val = spectrum_values(p, r, np.array([p.d_zfs + 1e9]), mw_power=10.0)
        assert val[0] == pytest.approx(1.0, abs=1e-6)

    def test_isolated_line_dip_equals_c_eff(self, narrow_spin):
        nu0 = 2.87e9
        r = isolated_line_set(nu0)
        c_eff, _ = saturation_factors(narrow_spin, 4.0)
        val = spectrum_values(narrow_spin, r, np.array([nu0]), mw_power=4.0)
        assert 1.0 - val[0] == pytest.approx(c_eff, rel=1e-3)

    def test_lorentzian_is_unity_at_center(self):
        assert lorentzian(1.0e9, 1.0e9, 5e5) == 1.0

    def test_hs_on_triplet_dip_triples(self, narrow_spin):
        # oracle: brute-force sum of the nine tooth x line Lorentzian terms
        nu0 = 2.87e9
        a = narrow_spin.a_hf
        r = isolated_line_set(nu0, spacing=a)
        power = 4.0
        c_eff, w_eff = saturation_factors(narrow_spin, power)

        brute = 0.0
        for tooth in (-a, 0.0, a):
            for line in (-a, 0.0, a):
                brute += c_eff * lorentzian(nu0 + tooth, nu0 + line, w_eff)
        val = spectrum_values(
            narrow_spin, r, np.array([nu0]), hs_on=True, mw_power=power
        )
        assert 1.0 - val[0] == pytest.approx(brute, rel=1e-6)
        assert 1.0 - val[0] == pytest.approx(3.0 * c_eff, rel=0.02)

    def test_hs_on_deepens_spectrum_pointwise(self):
        p = SpinSystemParams(hwhm=617e3, contrast=0.0153)
        r = transition_frequencies(p, (0.0, 0.0, 40 * UT))
        grid = np.linspace(p.d_zfs - 12e6, p.d_zfs + 12e6, 2001)
        off = spectrum_values(p, r, grid, hs_on=False)
        on = spectrum_values(p, r, grid, hs_on=True)
        assert np.all(on <= off + 1e-15)

    def test_argmin_at_line_center(self, narrow_spin):
        nu0 = 2.87e9
        r = isolated_line_set(nu0)
        grid = np.linspace(nu0 - 1e6, nu0 + 1e6, 4001)
        curve = odmr_spectrum(narrow_spin, r, grid, mw_power=4.0)
        step = grid[1] - grid[0]
        assert abs(grid[np.argmin(curve.values)] - nu0) <= step

    def test_sum_rule(self, narrow_spin):
        # integral of the isolated dip is pi * C_eff * w_eff; the grid spans
        # +/- 80 w_eff (tails beyond +/-50 w_eff alone are 1.27%)
        nu0 = 2.87e9
        r = isolated_line_set(nu0)
        power = 4.0
        c_eff, w_eff = saturation_factors(narrow_spin, power)
        grid = np.linspace(nu0 - 80 * w_eff, nu0 + 80 * w_eff, 20001)
        curve = odmr_spectrum(narrow_spin, r, grid, mw_power=power)
        integral = np.trapezoid(1.0 - curve.values, grid)
        assert integral == pytest.approx(np.pi * c_eff * w_eff, rel=0.01)

    def test_empty_grid_rejected(self):
        p = SpinSystemParams()
        r = transition_frequencies(p, (0.0, 0.0, 0.0))
        with pytest.raises(InvalidArgument):
            odmr_spectrum(p, r, np.array([]))

    def test_non_increasing_grid_rejected(self):
        p = SpinSystemParams()
        r = transition_frequencies(p, (0.0, 0.0, 0.0))
        with pytest.raises(InvalidArgument):
            odmr_spectrum(p, r, np.array([2.87e9, 2.87e9]))


class TestLockinLineshape:
    def test_zero_at_line_center(self, narrow_spin):
        nu0 = 2.87e9
        r = isolated_line_set(nu0)
        curve = lockin_lineshape(narrow_spin, r, np.array([nu0 - 1.0, nu0, nu0 + 1.0]),
                                 mw_power=4.0, depth=100e3)
        assert abs(curve.values[1]) < 1e-9

    def test_odd_symmetry(self, narrow_spin):
        nu0 = 2.87e9
        r = isolated_line_set(nu0)
        offs = np.linspace(1e3, 300e3, 40)
        left = lockin_lineshape(narrow_spin, r, nu0 - offs[::-1], mw_power=4.0,
                                depth=120e3).values[::-1]
        right = lockin_lineshape(narrow_spin, r, nu0 + offs, mw_power=4.0,
                                 depth=120e3).values
        np.testing.assert_allclose(right, -left, atol=1e-9)

    def test_small_depth_derivative_limit(self, narrow_spin):
        # oracle: numerical derivative of S by central finite differences
        nu0 = 2.87e9
        r = isolated_line_set(nu0)
        power = 4.0
        depth = narrow_spin.hwhm / 20.0
        probe = nu0 + 0.7 * narrow_spin.hwhm
        val = lockin_lineshape(narrow_spin, r, np.array([probe]), mw_power=power,
                               depth=depth).values[0]
        h = narrow_spin.hwhm / 5000.0
        s_plus = spectrum_values(narrow_spin, r, np.array([probe + h]), mw_power=power)[0]
        s_minus = spectrum_values(narrow_spin, r, np.array([probe - h]), mw_power=power)[0]
        dsdnu = (s_plus - s_minus) / (2.0 * h)
        assert val == pytest.approx((depth / 2.0) * dsdnu, rel=0.01)

    def test_optimal_depth_for_slope(self, narrow_spin):
        # oracle: dense 1-D scan of the center slope over depth
        nu0 = 2.87e9
        r = isolated_line_set(nu0)
        power = 4.0
        _, w_eff = saturation_factors(narrow_spin, power)
        depths = np.linspace(0.5 * w_eff, 3.0 * w_eff, 801)
        h = w_eff / 2000.0
        grid = np.array([nu0 - h, nu0 + h])
        slopes = [
            abs(np.diff(lockin_lineshape(narrow_spin, r, grid, mw_power=power,
                                         depth=d).values)[0]) / (2 * h)
            for d in depths
        ]
        best = depths[int(np.argmax(slopes))]
        expected = 2.0 * w_eff / np.sqrt(3.0)
        assert best == pytest.approx(expected, abs=depths[1] - depths[0])

    def test_depth_must_be_positive(self, narrow_spin):
        r = isolated_line_set(2.87e9)
        with pytest.raises(InvalidArgument):
            lockin_lineshape(narrow_spin, r, np.array([2.87e9]), depth=0.0)
