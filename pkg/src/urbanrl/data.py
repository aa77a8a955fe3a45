"""Forcing data: strict CSV ingestion, a synthetic climate generator and city presets."""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from urbanrl.bem import T_HIGH, T_LOW, ForcingStep
from urbanrl.env import DEFAULT_CONTROLLERS, DT_S, EPISODE_STEPS, canonical_city

CSV_HEADER = ("step", "t_canopy_k", "t_roof_inner_k", "t_sunwall_inner_k", "t_shadewall_inner_k")

STEPS_PER_DAY = 48
STEPS_PER_YEAR = EPISODE_STEPS

# fixed seeds of the synthetic "training year" and held-out "evaluation year"
TRAIN_YEAR_SEED = 2023
EVAL_YEAR_SEED = 2022


class ForcingFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ForcingSeries:
    step: np.ndarray
    t_canopy_k: np.ndarray
    t_roof_inner_k: np.ndarray
    t_sunwall_inner_k: np.ndarray
    t_shadewall_inner_k: np.ndarray
    dt_s: float = DT_S
    label: str = ""
    year_tag: str = ""

    def __post_init__(self):
        cols = [np.asarray(getattr(self, name)) for name in CSV_HEADER]
        n = len(cols[0])
        if any(len(c) != n for c in cols):
            raise ValueError("forcing columns differ in length")
        if n and np.any(np.diff(cols[0]) <= 0):
            raise ValueError("step indices must be strictly increasing")
        temps = np.stack(cols[1:]) if n else np.empty((4, 0))
        if not np.all(np.isfinite(temps)) or np.any((temps < T_LOW) | (temps > T_HIGH)):
            raise ValueError(f"forcing temperatures must be finite and within [{T_LOW}, {T_HIGH}] K")
        for name, col in zip(CSV_HEADER, cols):
            col = col.astype(np.int64 if name == "step" else float)
            col.setflags(write=False)
            object.__setattr__(self, name, col)
        object.__setattr__(self, "_temps", np.column_stack(cols[1:]).astype(float) if n else np.empty((0, 4)))

    def __len__(self) -> int:
        return len(self.step)

    def __getitem__(self, k: int) -> ForcingStep:
        row = self._temps[k]
        return ForcingStep(float(row[0]), float(row[1]), float(row[2]), float(row[3]), int(self.step[k]))

    def identical_to(self, other: "ForcingSeries") -> bool:
        return all(np.array_equal(getattr(self, n), getattr(other, n)) for n in CSV_HEADER)


def load_forcing_csv(path: str | os.PathLike, min_steps: int = EPISODE_STEPS) -> ForcingSeries:
    """Read a forcing CSV with the exact header ``CSV_HEADER``.

    Rows that fail to parse, carry NaN or lie outside the physical range are
    reported with their line number.
    """
    rows: list[tuple] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ForcingFormatError(f"{path}: empty file") from None
        if tuple(h.strip() for h in header) != CSV_HEADER:
            raise ForcingFormatError(f"{path}:1: bad header {header!r}; expected {','.join(CSV_HEADER)}")
        prev = None
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise ForcingFormatError(f"{path}:{lineno}: expected {len(CSV_HEADER)} fields, got {len(row)}")
            try:
                step = int(row[0])
                temps = tuple(float(v) for v in row[1:])
            except ValueError:
                raise ForcingFormatError(f"{path}:{lineno}: unparsable value in {row!r}") from None
            for name, t in zip(CSV_HEADER[1:], temps):
                if not (math.isfinite(t) and T_LOW <= t <= T_HIGH):
                    raise ForcingFormatError(f"{path}:{lineno}: {name}={t!r} outside [{T_LOW}, {T_HIGH}] K")
            if prev is not None and step <= prev:
                raise ForcingFormatError(f"{path}:{lineno}: step {step} not increasing")
            prev = step
            rows.append((step, *temps))
    if len(rows) < min_steps:
        raise ForcingFormatError(f"{path}: {len(rows)} rows, need at least {min_steps}")
    arr = list(zip(*rows)) if rows else [[]] * 5
    return ForcingSeries(
        step=np.array(arr[0], dtype=np.int64),
        t_canopy_k=np.array(arr[1], dtype=float),
        t_roof_inner_k=np.array(arr[2], dtype=float),
        t_sunwall_inner_k=np.array(arr[3], dtype=float),
        t_shadewall_inner_k=np.array(arr[4], dtype=float),
        label=os.path.basename(str(path)),
    )


def write_forcing_csv(series: ForcingSeries, path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(",".join(CSV_HEADER) + "\n")
        for k in range(len(series)):
            fh.write(
                f"{int(series.step[k])},{float(series.t_canopy_k[k])!r},{float(series.t_roof_inner_k[k])!r},"
                f"{float(series.t_sunwall_inner_k[k])!r},{float(series.t_shadewall_inner_k[k])!r}\n"
            )


@dataclass(frozen=True)
class SyntheticClimateSpec:
    mean_k: float
    annual_amplitude_k: float = 0.0
    diurnal_amplitude_k: float = 0.0
    noise_std_k: float = 0.0
    inner_node_lag_steps: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.annual_amplitude_k < 0 or self.diurnal_amplitude_k < 0:
            raise ValueError("amplitudes must be >= 0")
        if self.noise_std_k < 0:
            raise ValueError("noise_std_k must be >= 0")
        if self.inner_node_lag_steps < 0:
            raise ValueError("inner_node_lag_steps must be >= 0")


def _inner_node(canopy: np.ndarray, lag: int) -> np.ndarray:
    delayed = np.concatenate([np.full(lag, canopy[0]), canopy[: len(canopy) - lag]]) if lag else canopy
    # trailing 48-step mean; the first samples average over the padded start
    padded = np.concatenate([np.full(STEPS_PER_DAY - 1, delayed[0]), delayed])
    csum = np.cumsum(padded)
    csum = np.concatenate([[0.0], csum])
    return (csum[STEPS_PER_DAY:] - csum[:-STEPS_PER_DAY]) / STEPS_PER_DAY


def generate_synthetic(spec: SyntheticClimateSpec, steps: int = STEPS_PER_YEAR, label: str = "") -> ForcingSeries:
    """Sinusoidal annual + diurnal canopy temperature with Gaussian noise.

    Inner-node temperatures are the canopy series delayed by
    ``inner_node_lag_steps`` and smoothed with a trailing one-day mean.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    k = np.arange(steps)
    canopy = (
        spec.mean_k
        + spec.annual_amplitude_k * np.sin(2 * np.pi * k / STEPS_PER_YEAR)
        + spec.diurnal_amplitude_k * np.sin(2 * np.pi * k / STEPS_PER_DAY)
    )
    if spec.noise_std_k > 0:
        canopy = canopy + np.random.default_rng(spec.seed).normal(0.0, spec.noise_std_k, steps)
    inner = _inner_node(canopy, spec.inner_node_lag_steps)
    return ForcingSeries(
        step=k,
        t_canopy_k=canopy,
        t_roof_inner_k=inner,
        t_sunwall_inner_k=inner.copy(),
        t_shadewall_inner_k=inner.copy(),
        label=label,
        year_tag=f"seed{spec.seed}",
    )


@dataclass(frozen=True)
class CityPreset:
    name: str
    latitude_deg: float
    default_ac_k: float
    default_heat_k: float
    climate: SyntheticClimateSpec = field(repr=False)

    def forcing(self, seed: int, steps: int = STEPS_PER_YEAR) -> ForcingSeries:
        spec = SyntheticClimateSpec(
            mean_k=self.climate.mean_k,
            annual_amplitude_k=self.climate.annual_amplitude_k,
            diurnal_amplitude_k=self.climate.diurnal_amplitude_k,
            noise_std_k=self.climate.noise_std_k,
            inner_node_lag_steps=self.climate.inner_node_lag_steps,
            seed=seed,
        )
        return generate_synthetic(spec, steps, label=self.name)

    def train_forcing(self, steps: int = STEPS_PER_YEAR) -> ForcingSeries:
        return self.forcing(TRAIN_YEAR_SEED, steps)

    def eval_forcing(self, steps: int = STEPS_PER_YEAR) -> ForcingSeries:
        return self.forcing(EVAL_YEAR_SEED, steps)


# (latitude, mean K, annual amplitude K, diurnal amplitude K)
_CLIMATES = {
    "london": (51.5, 284.0, 7.0, 3.0),
    "new_york": (40.7, 285.0, 12.0, 5.0),
    "beijing": (39.9, 286.0, 15.0, 6.0),
    "hong_kong": (22.3, 296.0, 6.0, 3.0),
    "singapore": (1.35, 300.5, 1.0, 2.0),
}
NOISE_STD_K = 1.0
INNER_NODE_LAG = 6


def city_presets() -> list[CityPreset]:
    presets = []
    for name, (lat, mean, annual, diurnal) in _CLIMATES.items():
        ac, heat = DEFAULT_CONTROLLERS[name]
        presets.append(
            CityPreset(
                name=name,
                latitude_deg=lat,
                default_ac_k=ac,
                default_heat_k=heat,
                climate=SyntheticClimateSpec(mean, annual, diurnal, NOISE_STD_K, INNER_NODE_LAG, TRAIN_YEAR_SEED),
            )
        )
    return presets


def city_preset(name: str) -> CityPreset:
    key = canonical_city(name)
    for preset in city_presets():
        if preset.name == key:
            return preset
    raise KeyError(f"unknown city {name!r}; known: {', '.join(_CLIMATES)}")
