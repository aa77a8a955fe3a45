"""Soft actor-critic with twin Q-networks, a tanh-squashed Gaussian policy and auto-tuned temperature."""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass

import numpy as np

from urbanrl.agents.common import (
    ACTION_CENTER,
    ACTION_DIM,
    ACTION_SCALE,
    OBS_DIM,
    normalize_obs,
)
from urbanrl.agents.replay import Batch, ReplayBuffer
from urbanrl.nn import Adam, Mlp

LOG_2PI = math.log(2.0 * math.pi)
# keeps log(scale * (1 - tanh^2)) finite at the action bounds
JACOBIAN_EPS = 1e-6


@dataclass(frozen=True)
class SacConfig:
    gamma: float = 0.99
    tau: float = 0.005
    batch_size: int = 256
    learning_starts: int = 5000
    policy_lr: float = 3e-4
    q_lr: float = 1e-3
    policy_frequency: int = 2
    target_network_frequency: int = 1
    alpha: float = 0.2
    autotune: bool = True
    buffer_size: int = 1_000_000
    hidden: int = 256
    log_std_min: float = -5.0
    log_std_max: float = 2.0


def squash_log_std(z: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Map the raw log-std head smoothly into [lo, hi]."""
    return lo + 0.5 * (hi - lo) * (np.tanh(z) + 1.0)


def squashed_gaussian_log_prob(u, mean, log_std, scale=ACTION_SCALE) -> np.ndarray:
    """Log-density of ``center + scale * tanh(u)`` for u ~ Normal(mean, exp(log_std)).

    Summed over the last axis; includes the change-of-variables term.
    """
    u, mean, log_std = (np.asarray(v, dtype=float) for v in (u, mean, log_std))
    eps = (u - mean) / np.exp(log_std)
    y = np.tanh(u)
    return np.sum(
        -0.5 * eps * eps - log_std - 0.5 * LOG_2PI - np.log(scale * (1.0 - y * y) + JACOBIAN_EPS),
        axis=-1,
    )


def sac_td_target(rewards, dones, q1_next, q2_next, next_log_prob, alpha: float, gamma: float) -> np.ndarray:
    """y = r + gamma * (min(Q1', Q2') - alpha * log pi(a'|s')); no bootstrap when terminal."""
    rewards = np.asarray(rewards, dtype=float)
    if rewards.size == 0:
        raise ValueError("empty batch")
    soft_value = np.minimum(np.ravel(q1_next), np.ravel(q2_next)) - alpha * np.ravel(next_log_prob)
    return rewards + gamma * (1.0 - np.asarray(dones, dtype=float)) * soft_value


def scale_action(squashed: np.ndarray) -> np.ndarray:
    return ACTION_CENTER + ACTION_SCALE * squashed


def unscale_action(action: np.ndarray) -> np.ndarray:
    return (np.asarray(action, dtype=float) - ACTION_CENTER) / ACTION_SCALE


class SacAgent:
    kind = "sac"

    def __init__(self, config: SacConfig | None = None, seed: int = 0):
        self.config = c = config or SacConfig()
        init = np.random.default_rng(seed)
        h = c.hidden
        self.policy = Mlp.init([OBS_DIM, h, h, 2 * ACTION_DIM], init)
        self.qf1 = Mlp.init([OBS_DIM + ACTION_DIM, h, h, 1], init)
        self.qf2 = Mlp.init([OBS_DIM + ACTION_DIM, h, h, 1], init)
        self.qf1_target = self.qf1.copy()
        self.qf2_target = self.qf2.copy()
        self.q_optimizer = Adam(self.qf1.params() + self.qf2.params(), lr=c.q_lr)
        self.policy_optimizer = Adam(self.policy.params(), lr=c.policy_lr)
        self.log_alpha = np.array([math.log(c.alpha)])
        self.alpha_optimizer = Adam([self.log_alpha], lr=c.q_lr)
        self.target_entropy = -float(ACTION_DIM)
        self.buffer = ReplayBuffer(c.buffer_size, OBS_DIM, ACTION_DIM)
        self.rng = np.random.default_rng([seed, 2])

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha[0])) if self.config.autotune else self.config.alpha

    # -- policy ---------------------------------------------------------------

    def _heads(self, out: np.ndarray):
        mean = out[..., :ACTION_DIM]
        z = out[..., ACTION_DIM:]
        return mean, z, squash_log_std(z, self.config.log_std_min, self.config.log_std_max)

    def sample(self, obs, rng: np.random.Generator | None = None, deterministic: bool = False,
               _reuse: bool = False):
        """Return ``(action, log_prob)`` in environment units for one or many observations."""
        out = self.policy.forward(normalize_obs(obs), reuse=_reuse)
        mean, _, log_std = self._heads(out)
        if deterministic:
            u = mean
        else:
            rng = rng if rng is not None else self.rng
            u = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
        return scale_action(np.tanh(u)), squashed_gaussian_log_prob(u, mean, log_std)

    def act(self, obs, global_step: int = 0, rng: np.random.Generator | None = None,
            deterministic: bool = False) -> np.ndarray:
        action, _ = self.sample(obs, rng, deterministic)
        return action

    def observe(self, obs, action, reward: float, next_obs, done: bool) -> None:
        self.buffer.add(obs, action, reward, next_obs, done)

    # -- critics --------------------------------------------------------------

    @staticmethod
    def critic_input(obs, actions) -> np.ndarray:
        return np.concatenate([normalize_obs(obs), unscale_action(actions)], axis=-1)

    def td_target(self, batch: Batch, rng: np.random.Generator | None = None) -> np.ndarray:
        next_actions, next_log_prob = self.sample(batch.next_obs, rng, _reuse=True)
        x = self.critic_input(batch.next_obs, next_actions)
        return sac_td_target(
            batch.rewards, batch.dones,
            self.qf1_target.forward(x, reuse=True), self.qf2_target.forward(x, reuse=True),
            next_log_prob, self.alpha, self.config.gamma,
        )

    def update_critics(self, batch: Batch, targets: np.ndarray) -> float:
        """Adam step on the summed twin losses mean((Q_j - y)^2); returns the loss before the step."""
        x = self.critic_input(batch.obs, batch.actions)
        n = len(batch)
        grads = []
        loss = 0.0
        for net in (self.qf1, self.qf2):
            q, cache = net.forward_cache(x, reuse=True)
            err = q[:, 0] - targets
            loss += float(np.mean(err * err))
            g, _ = net.backward(cache, (2.0 / n) * err[:, None], need_input_grad=False, reuse=True)
            grads += g
        self.q_optimizer.step(grads)
        return loss

    # -- actor and temperature ------------------------------------------------

    def actor_loss_and_grads(self, obs, noise: np.ndarray, alpha: float | None = None):
        """Policy objective mean(alpha * log pi(a|s) - min_j Q_j(s, a)) with reparameterised a.

        Returns ``(loss, policy_grads, log_prob)``; ``noise`` is the standard
        normal draw that defines the sampled actions.
        """
        alpha = self.alpha if alpha is None else alpha
        c = self.config
        on = normalize_obs(obs)
        n = len(on)
        out, pcache = self.policy.forward_cache(on, reuse=True)
        mean, z, log_std = self._heads(out)
        std = np.exp(log_std)
        u = mean + std * noise
        y = np.tanh(u)
        one_m_y2 = 1.0 - y * y
        denom = ACTION_SCALE * one_m_y2 + JACOBIAN_EPS
        log_prob = np.sum(-0.5 * noise * noise - log_std - 0.5 * LOG_2PI - np.log(denom), axis=-1)

        x = np.concatenate([on, y], axis=-1)
        q1, c1 = self.qf1.forward_cache(x, reuse=True)
        q2, c2 = self.qf2.forward_cache(x, reuse=True)
        first = q1[:, 0] <= q2[:, 0]
        q_min = np.where(first, q1[:, 0], q2[:, 0])
        loss = float(np.mean(alpha * log_prob - q_min))

        _, gx1 = self.qf1.backward(c1, (-1.0 / n) * first[:, None].astype(float), param_grads=False, reuse=True)
        _, gx2 = self.qf2.backward(c2, (-1.0 / n) * (~first)[:, None].astype(float), param_grads=False,
                                 reuse=True)
        g_logp = alpha / n
        g_y = (gx1 + gx2)[:, OBS_DIM:] + g_logp * 2.0 * ACTION_SCALE * y / denom
        g_u = g_y * one_m_y2
        g_log_std = g_u * std * noise - g_logp
        g_z = g_log_std * 0.5 * (c.log_std_max - c.log_std_min) * (1.0 - np.tanh(z) ** 2)
        grads, _ = self.policy.backward(pcache, np.concatenate([g_u, g_z], axis=-1), need_input_grad=False,
                                        reuse=True)
        return loss, grads, log_prob

    def update_actor(self, batch: Batch, rng: np.random.Generator | None = None):
        rng = rng if rng is not None else self.rng
        noise = rng.standard_normal((len(batch), ACTION_DIM))
        loss, grads, log_prob = self.actor_loss_and_grads(batch.obs, noise)
        self.policy_optimizer.step(grads)
        return loss, log_prob

    def update_alpha(self, log_prob: np.ndarray) -> float:
        """Gradient step on -alpha * mean(log pi + target_entropy) w.r.t. log(alpha)."""
        alpha = self.alpha
        gap = float(np.mean(log_prob)) + self.target_entropy
        self.alpha_optimizer.step([np.array([-alpha * gap])])
        return -alpha * gap

    def update_targets(self) -> None:
        self.qf1_target.polyak(self.qf1, self.config.tau)
        self.qf2_target.polyak(self.qf2, self.config.tau)

    def train_step(self, global_step: int):
        """One scheduled learning step; returns (q_loss, policy_loss, alpha_loss) or None.

        The policy and alpha losses are None on steps without a policy update.
        """
        c = self.config
        if global_step < c.learning_starts or len(self.buffer) < c.batch_size:
            return None
        batch = self.buffer.sample(c.batch_size, self.rng)
        q_loss = self.update_critics(batch, self.td_target(batch))
        policy_loss = alpha_loss = None
        if global_step % c.policy_frequency == 0:
            policy_loss, log_prob = self.update_actor(batch)
            if c.autotune:
                alpha_loss = self.update_alpha(log_prob)
        if global_step % c.target_network_frequency == 0:
            self.update_targets()
        return q_loss, policy_loss, alpha_loss

    # -- persistence ----------------------------------------------------------

    _NETS = ("policy", "qf1", "qf2", "qf1_target", "qf2_target")

    def save(self, path: str | os.PathLike) -> None:
        arrays = {}
        for name in self._NETS:
            arrays.update({f"{name}.{k}": v for k, v in getattr(self, name).to_arrays().items()})
        arrays["log_alpha"] = self.log_alpha
        arrays["config"] = np.array(json.dumps(asdict(self.config)))
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "SacAgent":
        with np.load(path) as data:
            agent = cls(SacConfig(**json.loads(str(data["config"]))))
            for name in cls._NETS:
                net = getattr(agent, name)
                prefix = f"{name}."
                arrays = {k[len(prefix):]: data[k] for k in data.files if k.startswith(prefix)}
                net.load_params(Mlp.from_arrays(arrays, net.activations()))
            agent.log_alpha[...] = data["log_alpha"]
        return agent
