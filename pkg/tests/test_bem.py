import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from urbanrl import bem
from urbanrl.bem import (
    BuildingParams,
    Coefficients,
    ForcingStep,
    HvacSetpoints,
    SingularBalanceError,
    ThermalState,
)

PARAMS = BuildingParams()
OFF = HvacSetpoints(328.15, 258.15, 0.3)

temps = st.floats(260.0, 330.0)


def forcing_at(t, canopy=None, step_index=0):
    return ForcingStep(t if canopy is None else canopy, t, t, t, step_index)


class TestAirDensity:
    def test_standard_sea_level(self):
        assert bem.air_density(288.15, PARAMS) == pytest.approx(1.2250, abs=1e-4)

    def test_unit_density_identity(self):
        assert bem.air_density(101325 / 287.04, PARAMS) == pytest.approx(1.0, abs=1e-15)

    @pytest.mark.parametrize("t", [0.0, -5.0])
    def test_nonpositive_temperature(self, t):
        with pytest.raises(ValueError):
            bem.air_density(t, PARAMS)


class TestBuildingParams:
    def test_rejects_nonpositive_area(self):
        with pytest.raises(ValueError, match="area_roof"):
            BuildingParams(area_roof=0.0)

    def test_rejects_bad_emissivity(self):
        with pytest.raises(ValueError):
            BuildingParams(emissivity_interior=1.5)

    def test_rejects_ground_temperature_out_of_range(self):
        with pytest.raises(ValueError):
            BuildingParams(deep_ground_temp_k=500.0)

    def test_kv_round_trip(self, tmp_path):
        params = BuildingParams(building_height_m=12.5, h_cv_roof=3.3)
        path = tmp_path / "building.txt"
        path.write_text("# archetype\n" + bem.dump_building_params(params))
        assert bem.load_building_params(path) == params

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "building.txt"
        path.write_text("roof_area = 2\n")
        with pytest.raises(ValueError, match="roof_area"):
            bem.load_building_params(path)

    def test_from_canyon_geometry(self):
        # canyon 20 m wide, roof fraction 0.5 -> building 20 m wide; walls H / width each
        params = BuildingParams.from_canyon(10.0, 2.0, 0.5)
        assert params.area_sunwall == pytest.approx(0.5)
        assert params.area_shadewall == params.area_sunwall

    def test_conductances(self):
        assert PARAMS.conductances == pytest.approx([20.0, 20.0, 20.0, 2.0])


class TestSolveEnergyBalance:
    def test_equilibrium_is_fixed_point(self):
        params = BuildingParams(deep_ground_temp_k=295.0)
        state = ThermalState.uniform(295.0)
        out = bem.solve_energy_balance(state, forcing_at(295.0), HvacSetpoints(300.0, 290.0, 0.0), params)
        np.testing.assert_allclose(out.as_array(), state.as_array(), rtol=0, atol=1e-10)

    def test_relaxes_between_boundaries(self):
        params = BuildingParams(deep_ground_temp_k=310.0)
        out = bem.solve_energy_balance(ThermalState.uniform(295.0), forcing_at(310.0), OFF, params)
        arr = out.as_array()
        assert np.all(arr > 295.0) and np.all(arr < 310.0)

    def test_two_node_closed_form(self):
        # only roof conduction and roof-air convection couple anything; the
        # other surfaces just sit at their boundary temperature
        h, k, cap, dt = 4.0, 20.0, 12000.0, 1800.0
        coef = Coefficients(
            h_rd=0.0,
            h_cv=np.array([h, 0.0, 0.0, 0.0]),
            conductance=np.array([k, 1.0, 1.0, 1.0]),
            areas=np.ones(4),
            air_capacity=cap,
            vent_conductance=0.0,
            dt_s=dt,
        )
        t_old, t_b = 290.0, 305.0
        boundary = np.array([t_b, 300.0, 301.0, 302.0])
        x, res = bem.solve_linear_balance(coef, t_old, boundary, 280.0)
        s = cap / dt
        det = (h + k) * (s + h) - h * h
        t_roof = (k * t_b * (s + h) + h * s * t_old) / det
        t_air = ((h + k) * s * t_old + h * k * t_b) / det
        assert x[0] == pytest.approx(t_roof, abs=1e-10)
        assert x[4] == pytest.approx(t_air, abs=1e-10)
        np.testing.assert_allclose(x[1:4], [300.0, 301.0, 302.0], atol=1e-10)
        assert np.max(np.abs(res)) < 1e-9

    def test_singular_system_reports_condition(self):
        coef = Coefficients(
            h_rd=0.0, h_cv=np.zeros(4), conductance=np.zeros(4), areas=np.ones(4),
            air_capacity=0.0, vent_conductance=0.0, dt_s=1800.0,
        )
        with pytest.raises(SingularBalanceError) as info:
            bem.solve_linear_balance(coef, 290.0, np.full(4, 290.0), 290.0)
        assert info.value.condition > 1e12 or not np.isfinite(info.value.condition)

    def test_rejects_nonpositive_dt(self):
        with pytest.raises(ValueError):
            bem.solve_energy_balance(ThermalState.uniform(295.0), forcing_at(295.0), OFF, PARAMS, dt_s=0.0)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(temps, min_size=5, max_size=5), st.lists(temps, min_size=4, max_size=4),
           st.floats(0.0, 2.0))
    def test_residuals_below_tolerance(self, state_t, forcing_t, vent):
        state = ThermalState(*state_t)
        forcing = ForcingStep(*forcing_t)
        _, fluxes = bem.step(state, forcing, HvacSetpoints(328.15, 258.15, vent), PARAMS)
        assert max(abs(r) for r in fluxes.residuals) < 1e-6

    @settings(max_examples=200, deadline=None)
    @given(st.lists(temps, min_size=5, max_size=5), temps, st.floats(0.1, 3.0), st.floats(0.01, 20.0))
    def test_warmer_canopy_never_cools_indoor_air(self, state_t, canopy, vent, bump):
        state = ThermalState(*state_t)
        sp = HvacSetpoints(328.15, 258.15, vent)
        cold = bem.solve_energy_balance(state, ForcingStep(canopy, 295.0, 296.0, 297.0), sp, PARAMS)
        warm = bem.solve_energy_balance(state, ForcingStep(min(canopy + bump, 400.0), 295.0, 296.0, 297.0), sp,
                                        PARAMS)
        assert warm.t_indoor_k >= cold.t_indoor_k


def _params_with_density(rho, t):
    # choose p_std so that air_density(t) == rho exactly up to rounding
    return BuildingParams(p_std_pa=rho * bem.R_DA * t)


class TestApplyHvac:
    def test_at_setpoint_no_flux(self):
        state = ThermalState(295, 295, 295, 295, 299.15)
        out, fl = bem.apply_hvac(state, HvacSetpoints(299.15, 288.15, 0.3), PARAMS)
        assert fl.f_cool_wm2 == 0.0 and fl.f_heat_wm2 == 0.0
        assert out == state

    def test_cooling_flux_and_waste_heat(self):
        t = 300.15
        params = _params_with_density(1.2, t)
        state = ThermalState(295, 295, 295, 295, t)
        out, fl = bem.apply_hvac(state, HvacSetpoints(299.15, 288.15, 0.3), params)
        assert fl.f_cool_wm2 == pytest.approx(10 * 1.2 * 1004.64 / 1800, rel=1e-12)
        assert fl.f_cool_wm2 == pytest.approx(6.698, abs=1e-3)
        assert fl.f_wasteheat_wm2 == pytest.approx(4.019, abs=1e-3)
        assert fl.f_heat_wm2 == 0.0
        assert out.t_indoor_k == 299.15

    def test_heating_flux(self):
        t = 286.15
        params = _params_with_density(1.2, t)
        state = ThermalState(295, 295, 295, 295, t)
        out, fl = bem.apply_hvac(state, HvacSetpoints(299.15, 288.15, 0.3), params)
        assert fl.f_heat_wm2 == pytest.approx(13.395, abs=1e-3)
        assert fl.f_cool_wm2 == 0.0
        assert fl.f_wasteheat_wm2 == 0.2 * fl.f_heat_wm2
        assert out.t_indoor_k == 288.15

    @settings(max_examples=300, deadline=None)
    @given(st.lists(temps, min_size=5, max_size=5), st.floats(290.0, 310.0), st.floats(0.5, 30.0))
    def test_clamp_invariants(self, state_t, t_max, gap):
        sp = HvacSetpoints(t_max, t_max - gap, 0.3)
        once, fl = bem.apply_hvac(ThermalState(*state_t), sp, PARAMS)
        twice, fl2 = bem.apply_hvac(once, sp, PARAMS)
        assert twice == once
        assert fl2.f_cool_wm2 == 0.0 and fl2.f_heat_wm2 == 0.0
        assert fl.f_cool_wm2 >= 0 and fl.f_heat_wm2 >= 0
        assert fl.f_cool_wm2 * fl.f_heat_wm2 == 0.0
        assert fl.f_wasteheat_wm2 == 0.6 * fl.f_cool_wm2 + 0.2 * fl.f_heat_wm2
        assert sp.t_min_k <= once.t_indoor_k <= sp.t_max_k


class TestStep:
    def test_equilibrium_step(self):
        params = BuildingParams(deep_ground_temp_k=295.0)
        state = ThermalState.uniform(295.0)
        out, fl = bem.step(state, forcing_at(295.0), HvacSetpoints(299.15, 288.15, 0.3), params)
        np.testing.assert_allclose(out.as_array(), state.as_array(), atol=1e-10)
        assert fl.f_cool_wm2 == 0.0 and fl.f_heat_wm2 == 0.0
        assert fl.f_vent_wm2 == pytest.approx(0.0, abs=1e-9)

    def test_hot_forcing_pins_indoor_at_ac_setpoint(self):
        params = BuildingParams(deep_ground_temp_k=300.0)
        state = ThermalState.uniform(300.0)
        sp = HvacSetpoints(299.15, 288.15, 0.3)
        forcing = ForcingStep(315.0, 320.0, 320.0, 320.0)
        for _ in range(1000):
            state, fl = bem.step(state, forcing, sp, params)
            assert state.t_indoor_k == 299.15
            assert fl.f_cool_wm2 > 0.0

    def test_hvac_off_for_moderate_forcing(self):
        state = ThermalState.uniform(293.0)
        for k in range(200):
            t = 293.0 + 5.0 * np.sin(k / 10)
            state, fl = bem.step(state, forcing_at(t, canopy=t + 1.0), OFF, PARAMS)
            assert fl.f_cool_wm2 == 0.0 and fl.f_heat_wm2 == 0.0

    def test_bit_identical_repeats(self):
        def run():
            state = ThermalState.uniform(290.0)
            traj = []
            for k in range(300):
                t = 290.0 + 10 * np.sin(k / 7)
                state, _ = bem.step(state, forcing_at(t, canopy=t + 2), HvacSetpoints(297.0, 292.0, 0.4), PARAMS)
                traj.append(state.as_array())
            return np.array(traj)

        assert np.array_equal(run(), run())

    def test_building_flux_matches_air_storage(self):
        state = ThermalState.uniform(290.0)
        sp = HvacSetpoints(328.15, 258.15, 0.5)
        post, fl = bem.step(state, forcing_at(300.0), sp, PARAMS)
        cap = PARAMS.building_height_m * bem.air_density(290.0, PARAMS) * PARAMS.c_p_j_kgk
        assert fl.f_building_wm2 == pytest.approx(cap * (post.t_indoor_k - 290.0) / 1800.0, rel=1e-12)

    def test_invalid_state_rejected(self):
        with pytest.raises(ValueError):
            ThermalState(295, 295, 295, 295, float("nan"))
        with pytest.raises(ValueError):
            dataclasses.replace(ThermalState.uniform(295.0), t_roof_k=100.0)

    def test_invalid_setpoints_rejected(self):
        with pytest.raises(ValueError):
            HvacSetpoints(290.0, 295.0, 0.3)
        with pytest.raises(ValueError):
            HvacSetpoints(299.0, 290.0, -0.1)
