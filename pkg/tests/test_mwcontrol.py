import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nvmagsim.errors import InvalidArgument
from nvmagsim.mwcontrol import (
    MWConfig,
    fsk_instantaneous_frequency,
    make_sweep,
    probe_comb,
    square_wave,
)


class TestMWConfig:
    def test_defaults_valid(self):
        c = MWConfig()
        assert c.center == 2.87e9

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"f_m": 0.0},
            {"depth": -1.0},
            {"center": 2.4e9},
            {"center": 3.1e9},
        ],
    )
    def test_invalid_configs(self, kwargs):
        with pytest.raises(InvalidArgument):
            MWConfig(**kwargs)


class TestFsk:
    def test_high_at_t0(self):
        c = MWConfig(center=2.87e9, depth=400e3, f_m=1e3)
        assert fsk_instantaneous_frequency(c, 0.0) == 2.87e9 + 200e3

    def test_low_in_second_half_cycle(self):
        c = MWConfig(center=2.87e9, depth=400e3, f_m=1e3)
        assert fsk_instantaneous_frequency(c, 0.75 / c.f_m) == 2.87e9 - 200e3

    def test_paper_depth_value(self):
        # 400 kHz peak-to-peak depth puts t = 0 at 2.8702 GHz
        c = MWConfig(center=2.87e9, depth=400e3, f_m=1e3)
        assert fsk_instantaneous_frequency(c, 0.0) == pytest.approx(2.8702e9, abs=1e-3)

    def test_rejects_negative_time(self):
        c = MWConfig()
        with pytest.raises(InvalidArgument):
            fsk_instantaneous_frequency(c, -1e-6)

    def test_periodic_exactly_on_dyadic_grid(self):
        # f_m and t chosen exactly representable so f(t) == f(t + 1/f_m) exactly
        c = MWConfig(center=2.87e9, depth=400e3, f_m=1024.0)
        t = np.arange(0, 4096, dtype=float) / 2.0**20
        f1 = fsk_instantaneous_frequency(c, t)
        f2 = fsk_instantaneous_frequency(c, t + 1.0 / c.f_m)
        np.testing.assert_array_equal(f1, f2)

    @given(cycles=st.integers(0, 10**6), frac=st.sampled_from([0.01, 0.2, 0.3, 0.45,
                                                               0.55, 0.7, 0.9]))
    @settings(max_examples=60, deadline=None)
    def test_periodic_away_from_edges(self, cycles, frac):
        c = MWConfig(f_m=997.0)
        t = (cycles + frac) / c.f_m
        assert fsk_instantaneous_frequency(c, t) == fsk_instantaneous_frequency(
            c, t + 1.0 / c.f_m
        )

    def test_mean_over_period_is_center(self):
        c = MWConfig(center=2.87e9, depth=400e3, f_m=1e3)
        # midpoint sampling, equal counts of both levels
        n = 1000
        t = (np.arange(n) + 0.5) / (n * c.f_m)
        mean = np.mean(fsk_instantaneous_frequency(c, t))
        assert mean == pytest.approx(c.center, rel=1e-9)

    def test_square_wave_convention(self):
        assert square_wave(0.0) == 1.0
        assert square_wave(0.499999) == 1.0
        assert square_wave(0.5) == -1.0
        assert square_wave(0.999) == -1.0


class TestProbeComb:
    def test_hs_off_single_tone(self):
        c = MWConfig(center=2.87e9, hs_on=False)
        assert probe_comb(c) == [(2.87e9, 1.0)]

    def test_hs_on_paper_tones(self):
        c = MWConfig(center=2.87e9, hs_on=True, sideband_spacing=2.158e6)
        tones = probe_comb(c)
        np.testing.assert_allclose(
            [f for f, _ in tones], [2.867842e9, 2.870000e9, 2.872158e9], atol=1e-3
        )

    def test_equal_amplitudes(self):
        c = MWConfig(hs_on=True)
        amps = {a for _, a in probe_comb(c)}
        assert amps == {1.0}

    def test_degenerate_comb_triples_depth(self, narrow_spin):
        # three coincident tones act like a single tone with 3x contrast
        from nvmagsim.nvmodel import spectrum_values

        from conftest import isolated_line_set

        nu0 = 2.87e9
        r = isolated_line_set(nu0)
        single = 1.0 - spectrum_values(narrow_spin, r, np.array([nu0]), hs_on=False,
                                       mw_power=4.0)[0]
        comb0 = 1.0 - spectrum_values(narrow_spin, r, np.array([nu0]), hs_on=True,
                                      mw_power=4.0, comb_spacing=0.0)[0]
        assert comb0 == pytest.approx(3.0 * single, rel=1e-12)


class TestMakeSweep:
    def test_three_points(self):
        plan = make_sweep(2.82e9, 2.92e9, 3, 1e-3)
        np.testing.assert_allclose(plan.frequencies, [2.82e9, 2.87e9, 2.92e9])

    def test_two_points(self):
        plan = make_sweep(1e9, 2e9, 2, 1e-3)
        np.testing.assert_array_equal(plan.frequencies, [1e9, 2e9])

    def test_exact_step(self):
        plan = make_sweep(2.5e9, 3.0e9, 501, 5e-3)
        steps = np.diff(plan.frequencies)
        np.testing.assert_allclose(steps, 1e6, rtol=1e-12)

    def test_inverted_range_rejected(self):
        with pytest.raises(InvalidArgument):
            make_sweep(2.9e9, 2.8e9, 10, 1e-3)
