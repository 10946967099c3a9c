import numpy as np
import pytest
from hypothesis import given, strategies as st

from ffdrive.errors import ConfigError, NumericalError
from ffdrive.grids import Grid1D
from ffdrive.model import (
    Harmonic,
    PhysicalParams,
    QuarticTilt,
    ScaleInvariant,
    Tabulated,
    evaluate_potential,
    evaluate_potential_time_derivative,
    load_config,
    make_potential_spec,
    tilt_schedule,
    tilt_schedule_rate,
)

TAU = 1.0


@pytest.fixture
def params():
    return PhysicalParams(mass=1.0, hbar=2.0, tau=TAU, n=17)


@pytest.fixture
def grid():
    return Grid1D(-8.0, 8.0, 256)


class TestSchedule:
    def test_endpoint_values(self):
        assert tilt_schedule(0.0, TAU) == pytest.approx(16.0, abs=1e-14)
        assert tilt_schedule(TAU, TAU) == pytest.approx(-16.0, abs=1e-14)

    def test_midpoint_vanishes(self):
        assert tilt_schedule(TAU / 2, TAU) == pytest.approx(0.0, abs=1e-14)

    def test_endpoint_stationarity_analytic(self):
        assert abs(tilt_schedule_rate(0.0, TAU)) < 1e-10
        assert abs(tilt_schedule_rate(TAU, TAU)) < 1e-10

    def test_endpoint_stationarity_finite_difference(self):
        h = 1e-6
        fd0 = (tilt_schedule(h, TAU) - tilt_schedule(0.0, TAU)) / h
        fd1 = (tilt_schedule(TAU, TAU) - tilt_schedule(TAU - h, TAU)) / h
        assert abs(fd0) < 1e-4  # rate and curvature both vanish at the ends
        assert abs(fd1) < 1e-4

    @given(st.floats(min_value=-5.0, max_value=0.0))
    def test_clamped_below(self, t):
        assert tilt_schedule(t, TAU) == tilt_schedule(0.0, TAU)

    @given(st.floats(min_value=TAU, max_value=9.0))
    def test_clamped_above(self, t):
        assert tilt_schedule(t, TAU) == tilt_schedule(TAU, TAU)

    def test_rate_matches_finite_difference(self):
        h = 1e-6
        for t in (0.13, 0.25, 0.5, 0.77):
            fd = (tilt_schedule(t + h, TAU) - tilt_schedule(t - h, TAU)) / (2 * h)
            assert tilt_schedule_rate(t, TAU) == pytest.approx(fd, rel=1e-6)


class TestQuarticTilt:
    def test_value_at_t0(self, params):
        # q=1, t=0: 1 - 16 + 16*1
        grid = Grid1D(-8.0, 8.0, 257)  # q=1 is the grid point at index 144
        field = evaluate_potential(QuarticTilt(), params, grid, 0.0)
        assert field.values[grid.index_of(1.0)] == pytest.approx(1.0, abs=1e-12)

    def test_value_at_tau(self, params):
        grid = Grid1D(-8.0, 8.0, 257)
        field = evaluate_potential(QuarticTilt(), params, grid, TAU)
        assert field.values[grid.index_of(1.0)] == pytest.approx(-31.0, abs=1e-12)

    def test_midpoint_is_untilted(self, params, grid):
        field = evaluate_potential(QuarticTilt(), params, grid, TAU / 2)
        q = grid.points
        np.testing.assert_allclose(field.values, q**4 - 16 * q**2, atol=1e-12)

    @given(st.floats(min_value=-1.0, max_value=2.0))
    def test_clamping_of_full_potential(self, t):
        params = PhysicalParams()
        grid = Grid1D(-8.0, 8.0, 64)
        spec = QuarticTilt()
        inside = evaluate_potential(spec, params, grid, float(np.clip(t, 0, TAU)))
        any_t = evaluate_potential(spec, params, grid, t)
        assert np.array_equal(inside.values, any_t.values)

    def test_time_derivative_zero_at_ends(self, params, grid):
        for t in (0.0, TAU):
            dfield = evaluate_potential_time_derivative(QuarticTilt(), params, grid, t)
            assert np.abs(dfield.values).max() < 1e-10

    def test_time_derivative_against_centered_difference(self, params, grid):
        # independent oracle: centered finite difference of the potential
        spec = QuarticTilt()
        t, h = TAU / 4, 1e-6
        up = evaluate_potential(spec, params, grid, t + h).values
        dn = evaluate_potential(spec, params, grid, t - h).values
        fd = (up - dn) / (2 * h)
        an = evaluate_potential_time_derivative(spec, params, grid, t).values
        np.testing.assert_allclose(an, fd, rtol=1e-6, atol=1e-8)

    def test_nonfinite_is_hard_error(self, params):
        wide = Grid1D(-1e100, 1e100, 32)
        with pytest.raises(NumericalError, match="not finite"):
            evaluate_potential(QuarticTilt(), params, wide, 0.0)


class TestOtherVariants:
    def test_harmonic_value_and_force(self, params, grid):
        spec = Harmonic(omega=2.0)
        field = evaluate_potential(spec, params, grid, 0.3)
        np.testing.assert_allclose(field.values, 0.5 * 4.0 * grid.points**2, atol=1e-12)
        assert np.abs(spec.value_dt(grid.points, 0.3, params)).max() == 0.0

    def test_scale_invariant_time_derivative_consistency(self, params, grid):
        spec = ScaleInvariant(
            base=lambda x: x**4,
            base_dq=lambda x: 4 * x**3,
            f=lambda t: 0.5 * t**2,
            f_dot=lambda t: t,
            f_ddot=lambda t: 1.0,
            gamma=lambda t: 1.0 + 0.2 * t,
            gamma_dot=lambda t: 0.2,
            gamma_ddot=lambda t: 0.0,
        )
        t, h = 0.4, 1e-6
        fd = (
            spec.value(grid.points, t + h, params) - spec.value(grid.points, t - h, params)
        ) / (2 * h)
        an = spec.value_dt(grid.points, t, params)
        np.testing.assert_allclose(an, fd, rtol=1e-6, atol=1e-7)

    def test_tabulated_reproduces_quartic(self, params):
        ref = QuarticTilt()
        qn = np.linspace(-6, 6, 301)
        tn = np.linspace(0, TAU, 41)
        samples = np.stack([ref.value(qn, t, params) for t in tn])
        tab = Tabulated(q_nodes=qn, t_nodes=tn, samples=samples)
        sub = Grid1D(-5.5, 5.5, 64)
        for t in (0.0, 0.31, 0.77):
            got = evaluate_potential(tab, params, sub, t).values
            want = ref.value(sub.points, t, params)
            np.testing.assert_allclose(got, want, rtol=0, atol=0.15)

    def test_tabulated_rejects_out_of_range_q(self, params):
        qn = np.linspace(-2, 2, 41)
        tn = np.linspace(0, 1, 5)
        tab = Tabulated(qn, tn, np.tile(qn**2, (5, 1)))
        with pytest.raises(NumericalError, match="outside q range"):
            tab.value(np.array([3.0]), 0.0, params)


class TestParams:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"mass": 0.0},
            {"hbar": -1.0},
            {"tau": 0.0},
            {"n": -3},
        ],
    )
    def test_invalid_params_rejected(self, kwargs):
        with pytest.raises(ValueError):
            PhysicalParams(**kwargs)


class TestConfig:
    def test_roundtrip(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text(
            "# comment line\n"
            "potential = quartic\n"
            "hbar = 2.0\n"
            "n = 17\n"
            "grid_points = 512  # trailing comment\n"
            "output_dir = results\n"
        )
        cfg = load_config(str(cfg_file))
        assert cfg.hbar == 2.0
        assert cfg.grid_points == 512
        assert cfg.output_dir == "results"

    def test_unknown_key_is_error(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text("potentail = quartic\n")
        with pytest.raises(ConfigError, match="unknown config key 'potentail'"):
            load_config(str(cfg_file))

    def test_missing_file_is_error(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(str(tmp_path / "nope.cfg"))

    def test_bad_value_is_error(self, tmp_path):
        cfg_file = tmp_path / "run.cfg"
        cfg_file.write_text("grid_points = many\n")
        with pytest.raises(ConfigError, match="cannot parse"):
            load_config(str(cfg_file))

    def test_unknown_potential_is_error(self):
        with pytest.raises(ConfigError, match="unknown potential"):
            make_potential_spec("morse")

    def test_harmonic_with_frequency(self):
        spec = make_potential_spec("harmonic:2.5")
        assert spec.omega == 2.5
