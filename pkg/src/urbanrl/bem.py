"""Surrogate building energy model.

A single-zone building with four interior surfaces (roof, sunlit wall, shaded
wall, floor) and one indoor air node. Each timestep the four surface balances
(longwave exchange + convection + conduction = 0) and the indoor air balance
(storage = convection + ventilation) are solved implicitly as one 5x5 linear
system. HVAC then clamps the indoor air temperature to the setpoint band and
reports the heat flux that clamping costs.

All fluxes are per unit floor area (W m-2); areas are per unit floor area, so
``area_floor`` is normally 1.
"""

from __future__ import annotations

import dataclasses
import functools
import math
import os
from dataclasses import dataclass

import numpy as np

from urbanrl.config import apply_kv, dump_kv, read_kv

P_STD = 101325.0  # Pa
R_DA = 287.04  # J kg-1 K-1
C_P = 1004.64  # J kg-1 K-1
SIGMA = 5.670374419e-8  # W m-2 K-4

T_LOW, T_HIGH = 150.0, 400.0
SURFACES = ("roof", "sunwall", "shadewall", "floor")

# residual tolerance for an accepted solve, W m-2
RESIDUAL_TOL = 1e-6


class SingularBalanceError(np.linalg.LinAlgError):
    """The coupled balance system could not be solved accurately."""

    def __init__(self, message: str, condition: float):
        super().__init__(f"{message} (condition number {condition:.3e})")
        self.condition = condition


def _check_temp(name: str, value: float) -> None:
    if not (T_LOW <= value <= T_HIGH):
        raise ValueError(f"{name}={value!r} outside [{T_LOW}, {T_HIGH}] K")


@dataclass(frozen=True)
class BuildingParams:
    building_height_m: float = 10.0
    area_roof: float = 1.0
    area_sunwall: float = 1.0
    area_shadewall: float = 1.0
    area_floor: float = 1.0
    layer_thickness_roof_m: float = 0.05
    layer_thickness_sunwall_m: float = 0.05
    layer_thickness_shadewall_m: float = 0.05
    layer_thickness_floor_m: float = 0.5
    layer_conductivity_roof_w_mk: float = 1.0
    layer_conductivity_sunwall_w_mk: float = 1.0
    layer_conductivity_shadewall_w_mk: float = 1.0
    layer_conductivity_floor_w_mk: float = 1.0
    emissivity_interior: float = 0.9
    h_cv_roof: float = 4.0
    h_cv_sunwall: float = 3.0
    h_cv_shadewall: float = 3.0
    h_cv_floor: float = 4.0
    cop_ac: float = 0.9
    peff_ac: float = 0.96
    cop_heat: float = 3.6
    peff_heat: float = 0.43
    deep_ground_temp_k: float = 285.15
    p_std_pa: float = P_STD
    r_da_j_kgk: float = R_DA
    c_p_j_kgk: float = C_P

    def __post_init__(self):
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if not math.isfinite(value):
                raise ValueError(f"{f.name} must be finite")
        positive = [
            "building_height_m", "p_std_pa", "r_da_j_kgk", "c_p_j_kgk",
        ]
        for sfc in SURFACES:
            positive += [
                f"area_{sfc}",
                f"layer_thickness_{sfc}_m",
                f"layer_conductivity_{sfc}_w_mk",
                f"h_cv_{sfc}",
            ]
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0, got {getattr(self, name)!r}")
        if not 0 < self.emissivity_interior <= 1:
            raise ValueError("emissivity_interior must lie in (0, 1]")
        if self.cop_ac * self.peff_ac <= 0 or self.cop_heat * self.peff_heat <= 0:
            raise ValueError("cop * peff must be > 0 for both AC and heating")
        _check_temp("deep_ground_temp_k", self.deep_ground_temp_k)

    @classmethod
    def from_canyon(
        cls,
        building_height_m: float,
        canyon_width_to_height: float,
        roof_fraction: float,
        **overrides,
    ) -> "BuildingParams":
        """Derive equal wall areas from urban canyon geometry.

        The building width is estimated from the canyon width and roof
        fraction; each wall then has area ``H / width`` per unit floor area.
        """
        if not 0 < roof_fraction < 1 or canyon_width_to_height <= 0:
            raise ValueError("need 0 < roof_fraction < 1 and canyon_width_to_height > 0")
        canyon_width = canyon_width_to_height * building_height_m
        building_width = canyon_width * roof_fraction / (1.0 - roof_fraction)
        area_wall = building_height_m / building_width
        kw = dict(building_height_m=building_height_m, area_sunwall=area_wall, area_shadewall=area_wall)
        kw.update(overrides)
        return cls(**kw)

    @property
    def areas(self) -> np.ndarray:
        return np.array([self.area_roof, self.area_sunwall, self.area_shadewall, self.area_floor])

    @property
    def h_cv(self) -> np.ndarray:
        return np.array([self.h_cv_roof, self.h_cv_sunwall, self.h_cv_shadewall, self.h_cv_floor])

    @property
    def conductances(self) -> np.ndarray:
        """k/d of the innermost layer of each surface, W m-2 K-1."""
        return np.array([
            getattr(self, f"layer_conductivity_{s}_w_mk") / getattr(self, f"layer_thickness_{s}_m")
            for s in SURFACES
        ])


def load_building_params(path: str | os.PathLike) -> BuildingParams:
    return apply_kv(BuildingParams(), read_kv(path))


def dump_building_params(params: BuildingParams) -> str:
    return dump_kv(params)


@dataclass(frozen=True)
class ThermalState:
    t_roof_k: float
    t_sunwall_k: float
    t_shadewall_k: float
    t_floor_k: float
    t_indoor_k: float

    def __post_init__(self):
        for f in dataclasses.fields(self):
            _check_temp(f.name, getattr(self, f.name))

    @classmethod
    def uniform(cls, t_k: float) -> "ThermalState":
        return cls(t_k, t_k, t_k, t_k, t_k)

    def as_array(self) -> np.ndarray:
        return np.array([self.t_roof_k, self.t_sunwall_k, self.t_shadewall_k, self.t_floor_k, self.t_indoor_k])


@dataclass(frozen=True)
class ForcingStep:
    t_canopy_k: float
    t_roof_inner_k: float
    t_sunwall_inner_k: float
    t_shadewall_inner_k: float
    step_index: int = 0

    def __post_init__(self):
        for name in ("t_canopy_k", "t_roof_inner_k", "t_sunwall_inner_k", "t_shadewall_inner_k"):
            _check_temp(name, getattr(self, name))


@dataclass(frozen=True)
class HvacSetpoints:
    t_max_k: float
    t_min_k: float
    vent_ach: float

    def __post_init__(self):
        if not self.t_min_k < self.t_max_k:
            raise ValueError(f"t_min_k ({self.t_min_k}) must be below t_max_k ({self.t_max_k})")
        if not self.vent_ach >= 0:
            raise ValueError("vent_ach must be >= 0")


@dataclass(frozen=True)
class StepFluxes:
    f_cool_wm2: float
    f_heat_wm2: float
    f_vent_wm2: float
    f_wasteheat_wm2: float
    f_building_wm2: float = 0.0
    residuals: tuple[float, ...] = (0.0, 0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class Coefficients:
    """Linearised exchange coefficients frozen for one solve.

    ``h_rd`` is the interior longwave coefficient, ``air_capacity`` is
    V_B rho C_p (J m-2 K-1), ``vent_conductance`` is Vdot rho C_p (W m-2 K-1).
    ``view`` holds the area weights of the longwave exchange (zero diagonal,
    rows summing to one).
    """

    h_rd: float
    h_cv: np.ndarray
    conductance: np.ndarray
    areas: np.ndarray
    air_capacity: float
    vent_conductance: float
    dt_s: float
    view: np.ndarray | None = None

    def __post_init__(self):
        if self.view is None:
            object.__setattr__(self, "view", view_weights(self.areas))


def view_weights(areas: np.ndarray) -> np.ndarray:
    w = np.tile(np.asarray(areas, dtype=float), (4, 1))
    np.fill_diagonal(w, 0.0)
    return w / w.sum(axis=1, keepdims=True)


@functools.lru_cache(maxsize=64)
def _geometry(params: BuildingParams):
    areas = params.areas
    return areas, params.h_cv, params.conductances, view_weights(areas)


def air_density(t_indoor_k: float, params: BuildingParams | None = None) -> float:
    if not t_indoor_k > 0:
        raise ValueError(f"indoor temperature must be > 0 K, got {t_indoor_k!r}")
    p = params or BuildingParams()
    return p.p_std_pa / (p.r_da_j_kgk * t_indoor_k)


def linearize(state: ThermalState, setpoints: HvacSetpoints, params: BuildingParams, dt_s: float) -> Coefficients:
    t_ref = state.t_indoor_k
    rho = air_density(t_ref, params)
    volume = params.building_height_m * params.area_floor
    vdot = setpoints.vent_ach * volume / 3600.0
    areas, h_cv, cond, view = _geometry(params)
    return Coefficients(
        h_rd=4.0 * params.emissivity_interior * SIGMA * t_ref**3,
        h_cv=h_cv,
        conductance=cond,
        areas=areas,
        air_capacity=volume * rho * params.c_p_j_kgk,
        vent_conductance=vdot * rho * params.c_p_j_kgk,
        dt_s=dt_s,
        view=view,
    )


def boundary_temps(forcing: ForcingStep, params: BuildingParams) -> np.ndarray:
    return np.array([
        forcing.t_roof_inner_k,
        forcing.t_sunwall_inner_k,
        forcing.t_shadewall_inner_k,
        params.deep_ground_temp_k,
    ])


def assemble(coef: Coefficients, t_indoor_old: float, t_boundary: np.ndarray, t_canopy: float):
    """Build the 5x5 system ``A x = b`` for x = (4 surface temps, indoor air)."""
    A = np.empty((5, 5))
    A[:4, :4] = -coef.h_rd * coef.view
    A[:4, :4][np.diag_indices(4)] = coef.h_rd + coef.h_cv + coef.conductance
    A[:4, 4] = -coef.h_cv
    ah = coef.areas * coef.h_cv
    storage = coef.air_capacity / coef.dt_s
    A[4, :4] = -ah
    A[4, 4] = storage + ah.sum() + coef.vent_conductance
    b = np.empty(5)
    b[:4] = coef.conductance * t_boundary
    b[4] = storage * t_indoor_old + coef.vent_conductance * t_canopy
    return A, b


def balance_residuals(
    temps: np.ndarray, coef: Coefficients, t_indoor_old: float, t_boundary: np.ndarray, t_canopy: float
) -> np.ndarray:
    """Evaluate the five balance equations flux by flux, in W m-2."""
    ts, ta = temps[:4], temps[4]
    f_rd = coef.h_rd * (coef.view @ ts - ts)
    f_cv = coef.h_cv * (ta - ts)
    f_cd = coef.conductance * (t_boundary - ts)
    res = np.empty(5)
    res[:4] = f_rd + f_cv + f_cd
    res[4] = (
        coef.air_capacity * (ta - t_indoor_old) / coef.dt_s
        - np.dot(coef.areas * coef.h_cv, ts - ta)
        - coef.vent_conductance * (t_canopy - ta)
    )
    return res


def solve_linear_balance(coef: Coefficients, t_indoor_old: float, t_boundary: np.ndarray, t_canopy: float):
    """Solve the implicit system for given coefficients; returns (temps, residuals)."""
    A, b = assemble(coef, t_indoor_old, t_boundary, t_canopy)
    try:
        x = np.linalg.solve(A, b)
    except np.linalg.LinAlgError:
        raise SingularBalanceError("singular energy balance system", float(np.linalg.cond(A))) from None
    res = balance_residuals(x, coef, t_indoor_old, t_boundary, t_canopy)
    if not (np.all(np.isfinite(x)) and np.max(np.abs(res)) < RESIDUAL_TOL):
        raise SingularBalanceError(
            f"energy balance solve inaccurate (max residual {np.max(np.abs(res)):.3e} W m-2)",
            float(np.linalg.cond(A)),
        )
    return x, res


def _solve(state, forcing, setpoints, params, dt_s):
    if not dt_s > 0:
        raise ValueError("dt_s must be > 0")
    coef = linearize(state, setpoints, params, dt_s)
    x, res = solve_linear_balance(coef, state.t_indoor_k, boundary_temps(forcing, params), forcing.t_canopy_k)
    return x, res, coef


def solve_energy_balance(
    state: ThermalState,
    forcing: ForcingStep,
    setpoints: HvacSetpoints,
    params: BuildingParams,
    dt_s: float = 1800.0,
) -> ThermalState:
    """Backward-Euler step of the coupled surface/air balances, before HVAC clamping."""
    x, _, _ = _solve(state, forcing, setpoints, params, dt_s)
    return ThermalState(*(float(v) for v in x))


def apply_hvac(
    state: ThermalState, setpoints: HvacSetpoints, params: BuildingParams, dt_s: float = 1800.0
) -> tuple[ThermalState, StepFluxes]:
    t = state.t_indoor_k
    factor = params.building_height_m * air_density(t, params) * params.c_p_j_kgk / dt_s
    f_cool = f_heat = 0.0
    if t > setpoints.t_max_k:
        f_cool = factor * (t - setpoints.t_max_k)
        state = dataclasses.replace(state, t_indoor_k=setpoints.t_max_k)
    elif t < setpoints.t_min_k:
        f_heat = factor * (setpoints.t_min_k - t)
        state = dataclasses.replace(state, t_indoor_k=setpoints.t_min_k)
    return state, StepFluxes(
        f_cool_wm2=f_cool,
        f_heat_wm2=f_heat,
        f_vent_wm2=0.0,
        f_wasteheat_wm2=0.6 * f_cool + 0.2 * f_heat,
    )


def step(
    state: ThermalState,
    forcing: ForcingStep,
    setpoints: HvacSetpoints,
    params: BuildingParams,
    dt_s: float = 1800.0,
) -> tuple[ThermalState, StepFluxes]:
    """Advance the building one timestep: implicit balance solve, then HVAC clamp."""
    x, res, coef = _solve(state, forcing, setpoints, params, dt_s)
    pre = ThermalState(*(float(v) for v in x))
    post, fl = apply_hvac(pre, setpoints, params, dt_s)
    t_air = pre.t_indoor_k
    fluxes = dataclasses.replace(
        fl,
        f_vent_wm2=coef.vent_conductance * (forcing.t_canopy_k - t_air),
        f_building_wm2=coef.air_capacity * (t_air - state.t_indoor_k) / dt_s,
        residuals=tuple(float(r) for r in res),
    )
    return post, fluxes
