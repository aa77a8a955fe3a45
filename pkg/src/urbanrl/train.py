"""Training runs, evaluation rollouts and the desk-scale agent comparison."""

from __future__ import annotations

import csv
import dataclasses
import logging
import os
import time
from dataclasses import dataclass, field

import numpy as np

from urbanrl.agents import AGENT_KINDS, DqnAgent, QLearningAgent, SacAgent
from urbanrl.agents.common import obs_array
from urbanrl.analysis import TermTrace
from urbanrl.bem import BuildingParams, HvacSetpoints
from urbanrl.config import ConfigError
from urbanrl.data import ForcingSeries, city_preset, load_forcing_csv
from urbanrl.env import (
    EPISODE_STEPS,
    HvacEnv,
    RewardConfig,
    continuous_to_setpoints,
    decode_discrete,
    default_controller,
)
from urbanrl.policy_io import PolicyArtifact, export_policy, matmul_inference

logger = logging.getLogger(__name__)

RUNLOG_HEADER = ("episode", "return", "mean_reward", "steps", "seconds")
EVAL_HEADER = ("episode", "mean_reward", "mean_energy", "mean_comfort", "steps")


@dataclass(frozen=True)
class RunConfig:
    agent: str = "sac"
    city: str = "beijing"
    forcing: str = ""
    eval_forcing: str = ""
    episodes: int = 50
    gamma: float = 0.99
    seed: int = 0
    out: str = ""
    eval_episodes: int = 3
    w: float = 0.1
    episode_steps: int = EPISODE_STEPS

    def __post_init__(self):
        if self.agent not in AGENT_KINDS:
            raise ValueError(f"unknown agent {self.agent!r}; valid agents: {', '.join(AGENT_KINDS)}")
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must lie in (0, 1]")
        if self.eval_episodes < 0:
            raise ValueError("eval_episodes must be >= 0")
        if not (self.city or self.forcing):
            raise ValueError("either city or forcing must be given")

    def reward_config(self) -> RewardConfig:
        return RewardConfig(w=self.w)


@dataclass
class RunLog:
    episodes: list[int] = field(default_factory=list)
    returns: list[float] = field(default_factory=list)
    mean_rewards: list[float] = field(default_factory=list)
    steps: list[int] = field(default_factory=list)
    sim_seconds: list[float] = field(default_factory=list)
    wall_seconds: list[float] = field(default_factory=list)
    eval_mean: float | None = None
    eval_std: float | None = None

    def record(self, episode: int, ret: float, n_steps: int, sim_seconds: float, wall: float) -> None:
        self.episodes.append(episode)
        self.returns.append(ret)
        self.mean_rewards.append(ret / n_steps)
        self.steps.append(n_steps)
        self.sim_seconds.append(sim_seconds)
        self.wall_seconds.append(wall)

    @property
    def total_steps(self) -> int:
        return int(sum(self.steps))

    def write_csv(self, path: str | os.PathLike) -> None:
        """Deterministic payload; wall-clock time only appears in the trailing '#' line."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(RUNLOG_HEADER)
            for row in zip(self.episodes, self.returns, self.mean_rewards, self.steps, self.sim_seconds):
                writer.writerow([row[0], repr(row[1]), repr(row[2]), row[3], repr(row[4])])
            fh.write(f"# wall_seconds={sum(self.wall_seconds):.3f}\n")


def read_runlog_rows(path: str | os.PathLike) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(line for line in fh if not line.startswith("#")))


# -- forcing and environments ---------------------------------------------------


def building_for(forcing: ForcingSeries) -> BuildingParams:
    """Default building whose deep-ground temperature is the forcing's mean canopy temperature."""
    return BuildingParams(deep_ground_temp_k=float(np.mean(forcing.t_canopy_k)))


def resolve_forcing(config: RunConfig) -> tuple[ForcingSeries, ForcingSeries]:
    """(training, evaluation) forcing: files when given, otherwise the city's two synthetic years."""
    steps = config.episode_steps
    preset = city_preset(config.city) if config.city else None
    if config.forcing:
        train = load_forcing_csv(config.forcing, min_steps=steps)
    elif preset is not None:
        train = preset.train_forcing(steps)
    else:
        raise ConfigError("no training forcing: give --city or --forcing")
    if config.eval_forcing:
        evaluation = load_forcing_csv(config.eval_forcing, min_steps=steps)
    elif preset is not None:
        evaluation = preset.eval_forcing(steps)
    else:
        evaluation = train
    return train, evaluation


def make_env(forcing: ForcingSeries, mode: str, reward_config: RewardConfig, episode_steps: int = EPISODE_STEPS,
             params: BuildingParams | None = None) -> HvacEnv:
    return HvacEnv(forcing, params or building_for(forcing), reward_config, mode, episode_steps)


def make_agent(kind: str, seed: int, total_steps: int):
    if kind == "qlearning":
        return QLearningAgent()
    if kind == "dqn":
        return DqnAgent(seed=seed, total_steps=total_steps)
    if kind == "sac":
        return SacAgent(seed=seed)
    raise ConfigError(f"unknown agent {kind!r}; valid agents: {', '.join(AGENT_KINDS)}")


def action_mode(agent) -> str:
    return "continuous" if agent.kind == "sac" else "discrete"


# -- training -----------------------------------------------------------------


@dataclass
class TrainResult:
    agent: object
    log: RunLog
    train_forcing: ForcingSeries
    eval_forcing: ForcingSeries
    evaluation: "EvalResult | None" = None


def train_agent(agent, env: HvacEnv, episodes: int, seed: int, log: RunLog | None = None,
                on_episode=None) -> RunLog:
    """Run ``episodes`` training episodes of ``agent`` in ``env``.

    Every random draw comes from generators derived from ``seed`` and the
    agent's own seed, so repeated calls reproduce every logged number.
    """
    log = log if log is not None else RunLog()
    rng = np.random.default_rng([seed, 0])
    global_step = 0
    kind = agent.kind
    for episode in range(1, episodes + 1):
        start = time.perf_counter()
        if kind == "qlearning":
            agent.start_episode(episode)
        obs = obs_array(env.reset(seed=seed + episode))
        total = 0.0
        done = False
        n = 0
        while not done:
            if kind == "qlearning":
                action = agent.act(obs, rng)
            else:
                action = agent.act(obs, global_step, rng)
            outcome = env.step(action)
            next_obs = obs_array(outcome.observation)
            done = outcome.done
            agent.observe(obs, action, outcome.reward, next_obs, done)
            if kind != "qlearning":
                agent.train_step(global_step)
            total += outcome.reward
            obs = next_obs
            global_step += 1
            n += 1
        wall = time.perf_counter() - start
        log.record(episode, total, n, n * env.dt_s, wall)
        logger.info("episode %d: return %.3f, mean reward %.4f (%.1f s)", episode, total, total / n, wall)
        if on_episode is not None:
            on_episode(episode, log)
    return log


def save_agent(agent, out_dir: str | os.PathLike) -> list[str]:
    """Write the agent checkpoint (and, for SAC, its policy artifact); returns the paths."""
    os.makedirs(out_dir, exist_ok=True)
    if agent.kind == "qlearning":
        path = os.path.join(out_dir, "qtable.txt")
        agent.save(path)
        return [path]
    path = os.path.join(out_dir, f"{agent.kind}.npz")
    agent.save(path)
    paths = [path]
    if agent.kind == "sac":
        policy_path = os.path.join(out_dir, "policy.sacpolicy")
        export_policy(agent, policy_path)
        paths.append(policy_path)
    return paths


def train_run(config: RunConfig) -> TrainResult:
    train_forcing, eval_forcing = resolve_forcing(config)
    reward_config = config.reward_config()
    total_steps = config.episodes * config.episode_steps
    agent = make_agent(config.agent, config.seed, total_steps)
    env = make_env(train_forcing, action_mode(agent), reward_config, config.episode_steps)
    log = train_agent(agent, env, config.episodes, config.seed)
    result = TrainResult(agent, log, train_forcing, eval_forcing)
    if config.eval_episodes:
        result.evaluation = evaluate(
            controller_for(agent), eval_forcing, reward_config, config.eval_episodes,
            episode_steps=config.episode_steps, seed=config.seed,
        )
        log.eval_mean, log.eval_std = result.evaluation.mean, result.evaluation.std
    if config.out:
        os.makedirs(config.out, exist_ok=True)
        log.write_csv(os.path.join(config.out, "runlog.csv"))
        save_agent(agent, config.out)
        if result.evaluation is not None:
            result.evaluation.write_csv(os.path.join(config.out, "eval.csv"))
    return result


# -- controllers and evaluation --------------------------------------------------


class Controller:
    """Maps an observation array to HVAC setpoints during evaluation."""

    deterministic = True

    def setpoints(self, obs: np.ndarray, rng: np.random.Generator) -> HvacSetpoints:
        raise NotImplementedError


@dataclass
class FixedController(Controller):
    fixed: HvacSetpoints

    def setpoints(self, obs, rng):
        return self.fixed


@dataclass
class AgentController(Controller):
    """Greedy (Q-learning, DQN) or mean-action (SAC, unless stochastic) agent policy."""

    agent: object
    deterministic: bool = True

    def setpoints(self, obs, rng):
        kind = self.agent.kind
        if kind == "sac":
            action = self.agent.act(obs, rng=rng, deterministic=self.deterministic)
            return continuous_to_setpoints(action)[0]
        if kind == "dqn":
            return decode_discrete(self.agent.act(obs, rng=rng, greedy=True))
        return decode_discrete(self.agent.act(obs, rng, greedy=True))


@dataclass
class ArtifactController(Controller):
    artifact: PolicyArtifact

    @property
    def deterministic(self) -> bool:
        return self.artifact.deterministic

    def setpoints(self, obs, rng):
        return continuous_to_setpoints(matmul_inference(self.artifact, obs, rng))[0]


def controller_for(agent, deterministic: bool = True) -> Controller:
    return AgentController(agent, deterministic)


def default_controller_for(city: str) -> Controller:
    return FixedController(default_controller(city))


@dataclass
class EvalResult:
    mean: float
    std: float
    episode_means: list[float]
    traces: list[TermTrace]

    def write_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(EVAL_HEADER)
            for i, (m, t) in enumerate(zip(self.episode_means, self.traces), start=1):
                writer.writerow([i, repr(m), repr(t.mean_energy()), repr(t.mean_comfort()), len(t)])
            writer.writerow(["mean", repr(self.mean), "", "", ""])
            writer.writerow(["std", repr(self.std), "", "", ""])


def rollout(controller: Controller, env: HvacEnv, rng: np.random.Generator, seed: int = 0) -> tuple[float, TermTrace]:
    """One evaluation episode; returns (mean per-step reward, term trace)."""
    obs = obs_array(env.reset(seed=seed))
    n = env.episode_steps
    energy = np.empty(n)
    comfort = np.empty(n)
    total = 0.0
    for k in range(n):
        outcome = env.step_setpoints(controller.setpoints(obs, rng))
        energy[k] = outcome.energy_term
        comfort[k] = outcome.comfort_term
        total += outcome.reward
        obs = obs_array(outcome.observation)
    return total / n, TermTrace(energy, comfort)


def evaluate(controller: Controller, forcing: ForcingSeries, reward_config: RewardConfig | None = None,
             episodes: int = 3, episode_steps: int = EPISODE_STEPS, params: BuildingParams | None = None,
             seed: int = 0) -> EvalResult:
    """Mean and spread of the per-step reward over ``episodes`` rollouts.

    A deterministic controller on the deterministic surrogate gives the same
    rollout every time, so it is simulated once and repeated.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    reward_config = reward_config or RewardConfig()
    env = make_env(forcing, "continuous", reward_config, episode_steps, params)
    rng = np.random.default_rng([seed, 3])
    means, traces = [], []
    for episode in range(episodes):
        if controller.deterministic and traces:
            means.append(means[0])
            traces.append(traces[0])
            continue
        mean, trace = rollout(controller, env, rng, seed + episode)
        means.append(mean)
        traces.append(trace)
    return EvalResult(float(np.mean(means)), float(np.std(means)), means, traces)


# -- desk-scale comparison ----------------------------------------------------


@dataclass
class BenchmarkRow:
    agent: str
    seed: int
    eval_mean: float
    baseline_mean: float
    out: str = ""
    wall_seconds: float = 0.0

    @property
    def reward_diff(self) -> float:
        return self.eval_mean - self.baseline_mean


def benchmark(city: str = "beijing", agents=AGENT_KINDS, seeds=(0, 1, 2), episodes: int = 10,
              episode_steps: int = EPISODE_STEPS, w: float = 0.1, out_root: str | None = None) -> list[BenchmarkRow]:
    """Train each agent for ``episodes`` on the city's training year and score it on the held-out year.

    Every agent gets the same step budget; the baseline is the city's default controller.
    With ``out_root`` each run's log and checkpoints go to ``<out_root>/<agent>_seed<seed>``.
    """
    rows = []
    base_config = RunConfig(agent=agents[0], city=city, episodes=episodes, w=w, episode_steps=episode_steps,
                            eval_episodes=1)
    _, eval_forcing = resolve_forcing(base_config)
    baseline = evaluate(default_controller_for(city), eval_forcing, base_config.reward_config(), 1, episode_steps)
    for kind in agents:
        for seed in seeds:
            out = os.path.join(out_root, f"{kind}_seed{seed}") if out_root else ""
            config = dataclasses.replace(base_config, agent=kind, seed=seed, out=out)
            result = train_run(config)
            wall = float(sum(result.log.wall_seconds))
            rows.append(BenchmarkRow(kind, seed, result.evaluation.mean, baseline.mean, out, wall))
            logger.info("%s seed %d: eval %.4f, baseline %.4f", kind, seed, result.evaluation.mean, baseline.mean)
    return rows


def load_controller(path: str | os.PathLike, deterministic: bool = True) -> Controller:
    """Controller from a policy artifact (.sacpolicy), an agent checkpoint (.npz) or a Q-table dump."""
    from urbanrl.agents.qlearning import QTable
    from urbanrl.policy_io import load_policy

    path = os.fspath(path)
    if not os.path.exists(path):
        raise ConfigError(f"policy file not found: {path}")
    if path.endswith(".sacpolicy"):
        artifact = load_policy(path)
        artifact.deterministic = deterministic
        return ArtifactController(artifact)
    if path.endswith(".npz"):
        with np.load(path) as data:
            is_dqn = "n_actions" in data.files
        agent = DqnAgent.load(path) if is_dqn else SacAgent.load(path)
        return AgentController(agent, deterministic)
    agent = QLearningAgent()
    agent.table = QTable.load(path)
    return AgentController(agent, True)
