"""Tabular Q-learning over rounded, integer-encoded states."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from urbanrl.agents.common import obs_array
from urbanrl.env import N_DISCRETE


class EncodingError(ValueError):
    pass


def encode_state(obs) -> int:
    """Round each observation component (ventilation scaled by 10) and pack base-1000.

    key = v0 + v1*10^3 + v2*10^6 + v3*10^9 + v4*10^12
    """
    arr = obs_array(obs)
    if not np.all(np.isfinite(arr)):
        raise EncodingError(f"non-finite observation {arr!r}")
    scaled = (arr[0], arr[1], arr[2] * 10.0, arr[3], arr[4])
    key = 0
    for i, x in enumerate(scaled):
        v = int(round(float(x)))
        if not 0 <= v <= 999:
            raise EncodingError(f"component {i} rounds to {v}, outside [0, 999]")
        key += v * 1000**i
    return key


def epsilon_exponential(epoch: float, max_eps: float = 1.0, min_eps: float = 0.01, decay: float = 0.01) -> float:
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return min_eps + (max_eps - min_eps) * math.exp(-decay * epoch)


@dataclass(frozen=True)
class QLearningConfig:
    alpha: float = 0.1
    gamma: float = 0.99
    max_eps: float = 1.0
    min_eps: float = 0.01
    eps_decay: float = 0.01


class QTable:
    """Sparse state -> action-value table; unseen states read as zeros."""

    def __init__(self, n_actions: int = N_DISCRETE):
        self.n_actions = n_actions
        self.values: dict[int, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.values)

    def row(self, key: int) -> np.ndarray:
        row = self.values.get(key)
        return row.copy() if row is not None else np.zeros(self.n_actions)

    def _row_mut(self, key: int) -> np.ndarray:
        row = self.values.get(key)
        if row is None:
            row = self.values[key] = np.zeros(self.n_actions)
        return row

    def update(self, s: int, a: int, r: float, s_next: int, terminal: bool, alpha: float, gamma: float) -> float:
        """Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') - Q(s,a)); returns the new Q(s,a)."""
        if not 0 <= a < self.n_actions:
            raise ValueError(f"action {a} outside 0..{self.n_actions - 1}")
        bootstrap = 0.0
        if not terminal:
            nxt = self.values.get(s_next)
            bootstrap = float(nxt.max()) if nxt is not None else 0.0
        row = self._row_mut(s)
        row[a] += alpha * (r + gamma * bootstrap - row[a])
        return float(row[a])

    def greedy(self, key: int) -> int:
        row = self.values.get(key)
        # np.argmax returns the lowest index among ties
        return int(np.argmax(row)) if row is not None else 0

    def dump(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for key in sorted(self.values):
                fh.write(f"{key} " + " ".join(repr(float(v)) for v in self.values[key]) + "\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "QTable":
        table = None
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                parts = line.split()
                if not parts:
                    continue
                if table is None:
                    table = cls(len(parts) - 1)
                if len(parts) != table.n_actions + 1:
                    raise ValueError(f"{path}:{lineno}: expected {table.n_actions + 1} fields")
                table.values[int(parts[0])] = np.array([float(v) for v in parts[1:]])
        return table if table is not None else cls()


def q_update(table: QTable, s: int, a: int, r: float, s_next: int, alpha: float = 0.1, gamma: float = 0.99,
             terminal: bool = False) -> QTable:
    table.update(s, a, r, s_next, terminal, alpha, gamma)
    return table


class QLearningAgent:
    kind = "qlearning"

    def __init__(self, config: QLearningConfig | None = None, n_actions: int = N_DISCRETE):
        self.config = config or QLearningConfig()
        self.table = QTable(n_actions)
        self.epsilon = self.config.max_eps

    def start_episode(self, episode: int) -> None:
        """Set exploration for a 1-based episode number."""
        c = self.config
        self.epsilon = epsilon_exponential(episode, c.max_eps, c.min_eps, c.eps_decay)

    def act(self, obs, rng: np.random.Generator, greedy: bool = False) -> int:
        if not greedy and rng.random() < self.epsilon:
            return int(rng.integers(self.table.n_actions))
        return self.table.greedy(encode_state(obs))

    def observe(self, obs, action: int, reward: float, next_obs, done: bool) -> None:
        self.table.update(encode_state(obs), action, reward, encode_state(next_obs), done,
                          self.config.alpha, self.config.gamma)

    def save(self, path: str | os.PathLike) -> None:
        self.table.dump(path)
