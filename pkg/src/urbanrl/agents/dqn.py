"""Deep Q-network over the eight discrete HVAC actions."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass

import numpy as np

from urbanrl.agents.common import OBS_DIM, normalize_obs
from urbanrl.agents.replay import Batch, ReplayBuffer
from urbanrl.env import N_DISCRETE
from urbanrl.nn import Adam, Mlp

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DqnConfig:
    learning_rate: float = 2.5e-4
    gamma: float = 0.99
    buffer_size: int = 10000
    batch_size: int = 100
    tau: float = 1.0
    learning_starts: int = 10000
    train_frequency: int = 10
    target_network_frequency: int = 500
    hidden: int = 128
    start_e: float = 1.0
    end_e: float = 0.05
    exploration_fraction: float = 0.5


def linear_epsilon(step: int, total_steps: int, start_e: float = 1.0, end_e: float = 0.05,
                   fraction: float = 0.5) -> float:
    duration = max(fraction * total_steps, 1.0)
    slope = (end_e - start_e) / duration
    return max(slope * step + start_e, end_e)


def dqn_td_target(rewards, dones, next_q: np.ndarray, gamma: float) -> np.ndarray:
    """y = r + gamma * max_a' Q_target(s', a'), with no bootstrap on terminal transitions."""
    rewards = np.asarray(rewards, dtype=float)
    if rewards.size == 0:
        raise ValueError("empty batch")
    return rewards + gamma * (1.0 - np.asarray(dones, dtype=float)) * np.asarray(next_q).max(axis=1)


class DqnAgent:
    kind = "dqn"

    def __init__(self, config: DqnConfig | None = None, seed: int = 0, n_actions: int = N_DISCRETE,
                 total_steps: int = 1):
        self.config = c = config or DqnConfig()
        self.n_actions = n_actions
        self.total_steps = total_steps
        rng = np.random.default_rng(seed)
        self.q = Mlp.init([OBS_DIM, c.hidden, c.hidden, n_actions], rng)
        self.target = self.q.copy()
        self.optimizer = Adam(self.q.params(), lr=c.learning_rate)
        self.buffer = ReplayBuffer(c.buffer_size, OBS_DIM)
        self.rng = np.random.default_rng([seed, 1])

    def q_values(self, obs) -> np.ndarray:
        return self.q.forward(normalize_obs(obs))

    def epsilon(self, global_step: int) -> float:
        c = self.config
        return linear_epsilon(global_step, self.total_steps, c.start_e, c.end_e, c.exploration_fraction)

    def act(self, obs, global_step: int = 0, rng: np.random.Generator | None = None, greedy: bool = False) -> int:
        rng = rng if rng is not None else self.rng
        if not greedy and rng.random() < self.epsilon(global_step):
            return int(rng.integers(self.n_actions))
        return int(np.argmax(self.q_values(obs)))

    def observe(self, obs, action: int, reward: float, next_obs, done: bool) -> None:
        self.buffer.add(obs, action, reward, next_obs, done)

    def td_target(self, batch: Batch) -> np.ndarray:
        next_q = self.target.forward(normalize_obs(batch.next_obs))
        return dqn_td_target(batch.rewards, batch.dones, next_q, self.config.gamma)

    def update(self, batch: Batch, targets: np.ndarray) -> float:
        """One Adam step on mean((y - Q(s, a))^2); returns the loss before the step."""
        out, cache = self.q.forward_cache(normalize_obs(batch.obs))
        rows = np.arange(len(batch))
        err = out[rows, batch.actions] - targets
        grad = np.zeros_like(out)
        grad[rows, batch.actions] = 2.0 * err / len(batch)
        grads, _ = self.q.backward(cache, grad, need_input_grad=False)
        self.optimizer.step(grads)
        return float(np.mean(err * err))

    def update_target(self) -> None:
        if self.config.tau == 1.0:
            self.target.load_params(self.q)
        else:
            self.target.polyak(self.q, self.config.tau)

    def train_step(self, global_step: int) -> float | None:
        """Learn from the buffer on the configured schedule; None when nothing was done."""
        c = self.config
        if global_step < c.learning_starts:
            return None
        loss = None
        if global_step % c.train_frequency == 0:
            if len(self.buffer) < c.batch_size:
                logger.debug("replay buffer holds %d < batch %d; skipping update", len(self.buffer), c.batch_size)
            else:
                batch = self.buffer.sample(c.batch_size, self.rng)
                loss = self.update(batch, self.td_target(batch))
        if global_step % c.target_network_frequency == 0:
            self.update_target()
        return loss

    def save(self, path: str | os.PathLike) -> None:
        arrays = {f"q_{k}": v for k, v in self.q.to_arrays().items()}
        arrays.update({f"target_{k}": v for k, v in self.target.to_arrays().items()})
        arrays["config"] = np.array(json.dumps(asdict(self.config)))
        arrays["n_actions"] = np.array(self.n_actions)
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "DqnAgent":
        with np.load(path) as data:
            config = DqnConfig(**json.loads(str(data["config"])))
            agent = cls(config, n_actions=int(data["n_actions"]))
            acts = agent.q.activations()
            agent.q.load_params(Mlp.from_arrays({k[2:]: data[k] for k in data.files if k.startswith("q_")}, acts))
            agent.target.load_params(
                Mlp.from_arrays({k[7:]: data[k] for k in data.files if k.startswith("target_")}, acts)
            )
        return agent
