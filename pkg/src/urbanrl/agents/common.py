"""Pieces shared by the neural agents: observation scaling and action rescaling."""

from __future__ import annotations

import numpy as np

from urbanrl.env import ACTION_HIGH, ACTION_LOW, Observation

OBS_DIM = 5
ACTION_DIM = 3

# networks see (obs - OBS_CENTER) / OBS_SCALE; exported policies fold this into layer 0
OBS_CENTER = np.array([293.15, 293.15, 0.4, 293.15, 293.15])
OBS_SCALE = np.array([10.0, 10.0, 0.1, 10.0, 10.0])

ACTION_CENTER = (ACTION_HIGH + ACTION_LOW) / 2.0
ACTION_SCALE = (ACTION_HIGH - ACTION_LOW) / 2.0


def obs_array(obs) -> np.ndarray:
    if isinstance(obs, Observation):
        return obs.as_array()
    arr = np.asarray(obs, dtype=np.float64)
    if arr.shape[-1] != OBS_DIM:
        raise ValueError(f"observation must have {OBS_DIM} components, got shape {arr.shape}")
    return arr


def normalize_obs(obs) -> np.ndarray:
    return (obs_array(obs) - OBS_CENTER) / OBS_SCALE
