"""Episodic HVAC-control environment around the surrogate building model."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field

import numpy as np

from urbanrl import bem
from urbanrl.bem import BuildingParams, HvacSetpoints, StepFluxes, ThermalState
from urbanrl.config import ConfigError, apply_kv, read_kv

KELVIN = 273.15
EPISODE_STEPS = 17520
DT_S = 1800.0

# continuous action bounds: AC setpoint (C), heating setpoint (C), ventilation
ACTION_LOW = np.array([25.0, 10.0, 0.3])
ACTION_HIGH = np.array([35.0, 20.0, 0.5])

_AC_LEVELS = (299.15, 328.15)
_HEAT_LEVELS = (288.15, 258.15)
_VENT_LEVELS = (0.3, 0.5)
# index = 4 * ac + 2 * heat + vent
DISCRETE_ACTIONS: tuple[tuple[float, float, float], ...] = tuple(
    (ac, heat, vent) for ac in _AC_LEVELS for heat in _HEAT_LEVELS for vent in _VENT_LEVELS
)
N_DISCRETE = len(DISCRETE_ACTIONS)

INITIAL_SETPOINTS = HvacSetpoints(328.15, 258.15, 0.3)

DEFAULT_CONTROLLERS = {
    "london": (380.00, 290.10),
    "new_york": (310.00, 285.10),
    "beijing": (310.00, 285.10),
    "hong_kong": (310.10, 290.10),
    "singapore": (380.00, 285.10),
}


def canonical_city(name: str) -> str:
    return name.strip().lower().replace("-", "_").replace(" ", "_")


@dataclass(frozen=True)
class Observation:
    ac_setpoint_k: float
    heat_setpoint_k: float
    vent_ach: float
    t_indoor_k: float
    t_canopy_k: float

    def as_array(self) -> np.ndarray:
        return np.array([self.ac_setpoint_k, self.heat_setpoint_k, self.vent_ach, self.t_indoor_k, self.t_canopy_k])


@dataclass(frozen=True)
class RewardConfig:
    w: float = 0.1
    lambda_p: float = 1.0
    lambda_t: float = 1.0
    t_comfort_min_k: float = 291.15
    t_comfort_max_k: float = 297.15

    def __post_init__(self):
        if not 0.0 <= self.w <= 1.0:
            raise ValueError(f"w must lie in [0, 1], got {self.w}")
        if self.lambda_p <= 0 or self.lambda_t <= 0:
            raise ValueError("lambda_p and lambda_t must be > 0")
        if not self.t_comfort_min_k < self.t_comfort_max_k:
            raise ValueError("comfort band must satisfy min < max")


@dataclass(frozen=True)
class EpisodeConfig:
    """File-level reward/episode settings; comfort bounds are given in degC."""

    w: float = 0.1
    lambda_p: float = 1.0
    lambda_t: float = 1.0
    t_comfort_min_c: float = 18.0
    t_comfort_max_c: float = 24.0
    gamma: float = 0.99
    episode_steps: int = EPISODE_STEPS

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if self.episode_steps < 1:
            raise ValueError("episode_steps must be >= 1")

    def reward_config(self) -> RewardConfig:
        return RewardConfig(
            w=self.w,
            lambda_p=self.lambda_p,
            lambda_t=self.lambda_t,
            t_comfort_min_k=self.t_comfort_min_c + KELVIN,
            t_comfort_max_k=self.t_comfort_max_c + KELVIN,
        )


def load_episode_config(path: str | os.PathLike, overrides: dict | None = None) -> EpisodeConfig:
    values = read_kv(path) if path else {}
    values.update(overrides or {})
    return apply_kv(EpisodeConfig(), values)


@dataclass(frozen=True)
class StepOutcome:
    observation: Observation
    reward: float
    energy_term: float
    comfort_term: float
    done: bool
    fluxes: StepFluxes


def energy_term(f_cool_wm2: float, f_heat_wm2: float, params: BuildingParams | None = None) -> float:
    """Primary-energy demand P_ac + P_heat from the HVAC heat fluxes."""
    if f_cool_wm2 < 0 or f_heat_wm2 < 0:
        raise ValueError("HVAC fluxes must be non-negative")
    p = params or BuildingParams()
    return f_cool_wm2 / (p.cop_ac * p.peff_ac) + f_heat_wm2 / (p.cop_heat * p.peff_heat)


def comfort_term(t_indoor_k: float, config: RewardConfig) -> float:
    return abs(t_indoor_k - config.t_comfort_min_k) + abs(config.t_comfort_max_k - t_indoor_k)


def combine(energy: float, comfort: float, config: RewardConfig) -> float:
    return -config.w * config.lambda_p * energy - (1.0 - config.w) * config.lambda_t * comfort


def reward(energy: float, t_indoor_k: float, config: RewardConfig) -> float:
    if energy < 0:
        raise ValueError("energy_term must be non-negative")
    return combine(energy, comfort_term(t_indoor_k, config), config)


def episode_return(rewards, gamma: float) -> float:
    total = 0.0
    for r in reversed(list(rewards)):
        total = r + gamma * total
    return total


def decode_discrete(index: int) -> HvacSetpoints:
    if not 0 <= index < N_DISCRETE:
        raise ValueError(f"discrete action must be in 0..{N_DISCRETE - 1}, got {index}")
    return HvacSetpoints(*DISCRETE_ACTIONS[index])


def encode_discrete(setpoints: HvacSetpoints) -> int:
    key = (setpoints.t_max_k, setpoints.t_min_k, setpoints.vent_ach)
    try:
        return DISCRETE_ACTIONS.index(key)
    except ValueError:
        raise ValueError(f"{setpoints} is not one of the discrete actions") from None


def default_controller(city: str) -> HvacSetpoints:
    """Fixed setpoints of the reference (non-learning) controller for a city."""
    try:
        t_max, t_min = DEFAULT_CONTROLLERS[canonical_city(city)]
    except KeyError:
        raise KeyError(f"unknown city {city!r}; known: {', '.join(DEFAULT_CONTROLLERS)}") from None
    return HvacSetpoints(t_max, t_min, 0.3)


def continuous_to_setpoints(action) -> tuple[HvacSetpoints, bool]:
    """Map a (AC degC, heat degC, vent) action to setpoints; second value flags clipping."""
    a = np.asarray(action, dtype=float)
    if a.shape != (3,) or not np.all(np.isfinite(a)):
        raise ValueError(f"continuous action must be 3 finite numbers, got {action!r}")
    clipped = np.clip(a, ACTION_LOW, ACTION_HIGH)
    return (
        HvacSetpoints(float(clipped[0]) + KELVIN, float(clipped[1]) + KELVIN, float(clipped[2])),
        bool(np.any(clipped != a)),
    )


@dataclass
class HvacEnv:
    """One building driven by a forcing series; one episode is ``episode_steps`` steps.

    ``mode`` selects how :meth:`step` interprets actions: ``"continuous"``
    takes (AC degC, heat degC, vent) and ``"discrete"`` takes an index into
    :data:`DISCRETE_ACTIONS`. :meth:`step_setpoints` bypasses both.
    """

    forcing: "ForcingSeries"  # noqa: F821
    params: BuildingParams = field(default_factory=BuildingParams)
    reward_config: RewardConfig = field(default_factory=RewardConfig)
    mode: str = "continuous"
    episode_steps: int = EPISODE_STEPS
    dt_s: float = DT_S
    clip_count: int = 0

    def __post_init__(self):
        if self.mode not in ("continuous", "discrete"):
            raise ValueError(f"unknown action mode {self.mode!r}")
        if len(self.forcing) < self.episode_steps:
            raise ConfigError(
                f"forcing has {len(self.forcing)} steps, episode needs {self.episode_steps}"
            )
        self._state: ThermalState | None = None
        self._setpoints = INITIAL_SETPOINTS
        self._t = 0
        self._rng = np.random.default_rng(0)

    def reset(self, seed: int | None = None) -> Observation:
        # the dynamics are deterministic; the generator is kept for API symmetry
        self._rng = np.random.default_rng(seed)
        t0 = self.forcing.t_canopy_k[0]
        self._state = ThermalState.uniform(float(t0))
        self._setpoints = INITIAL_SETPOINTS
        self._t = 0
        return self._observation(float(t0))

    @property
    def steps_taken(self) -> int:
        return self._t

    @property
    def thermal_state(self) -> ThermalState:
        return self._state

    def _observation(self, t_canopy: float) -> Observation:
        sp = self._setpoints
        return Observation(sp.t_max_k, sp.t_min_k, sp.vent_ach, self._state.t_indoor_k, t_canopy)

    def step(self, action) -> StepOutcome:
        if self.mode == "discrete":
            setpoints = decode_discrete(int(action))
        else:
            setpoints, clipped = continuous_to_setpoints(action)
            if clipped:
                self.clip_count += 1
        return self.step_setpoints(setpoints)

    def step_setpoints(self, setpoints: HvacSetpoints) -> StepOutcome:
        if self._state is None:
            raise RuntimeError("call reset() before step()")
        if self._t >= self.episode_steps:
            raise RuntimeError("episode finished; call reset()")
        forcing = self.forcing[self._t]
        self._setpoints = setpoints
        self._state, fluxes = bem.step(self._state, forcing, setpoints, self.params, self.dt_s)
        self._t += 1
        e = energy_term(fluxes.f_cool_wm2, fluxes.f_heat_wm2, self.params)
        c = comfort_term(self._state.t_indoor_k, self.reward_config)
        return StepOutcome(
            observation=self._observation(forcing.t_canopy_k),
            reward=combine(e, c, self.reward_config),
            energy_term=e,
            comfort_term=c,
            done=self._t == self.episode_steps,
            fluxes=fluxes,
        )
