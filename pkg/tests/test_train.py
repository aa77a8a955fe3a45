import dataclasses

import numpy as np
import pytest

from urbanrl.agents import SacAgent
from urbanrl.analysis import reward_at_weight
from urbanrl.config import ConfigError
from urbanrl.data import SyntheticClimateSpec, generate_synthetic, write_forcing_csv
from urbanrl.env import EPISODE_STEPS, HvacSetpoints, RewardConfig
from urbanrl.train import (
    RUNLOG_HEADER,
    FixedController,
    RunConfig,
    controller_for,
    default_controller_for,
    evaluate,
    load_controller,
    make_agent,
    make_env,
    read_runlog_rows,
    train_agent,
    train_run,
)

SHORT = 96  # two simulated days per episode keeps the suite fast


def payload(path):
    """CSV bytes without the trailing wall-clock metadata line."""
    return b"".join(line for line in path.read_bytes().splitlines(keepends=True) if not line.startswith(b"#"))


def short_run(tmp_path, agent, seed=0, episodes=2, name=None):
    out = tmp_path / (name or f"{agent}_{seed}")
    config = RunConfig(agent=agent, city="beijing", episodes=episodes, seed=seed, out=str(out),
                       eval_episodes=2, episode_steps=SHORT)
    return train_run(config), out


class TestRunConfig:
    def test_default_budget(self):
        config = RunConfig()
        assert config.episodes * config.episode_steps == 876_000

    def test_rejects_unknown_agent(self):
        with pytest.raises(ValueError, match="qlearning, dqn, sac"):
            RunConfig(agent="ppo")

    @pytest.mark.parametrize("gamma", [0.0, 1.5])
    def test_gamma_range(self, gamma):
        with pytest.raises(ValueError):
            RunConfig(gamma=gamma)

    def test_episodes(self):
        with pytest.raises(ValueError):
            RunConfig(episodes=0)


class TestTrainRun:
    @pytest.mark.parametrize("agent", ["qlearning", "dqn", "sac"])
    def test_outputs_and_step_conservation(self, tmp_path, agent):
        result, out = short_run(tmp_path, agent, episodes=3)
        assert result.log.total_steps == 3 * SHORT
        rows = read_runlog_rows(out / "runlog.csv")
        assert tuple(rows[0]) == RUNLOG_HEADER
        assert [int(r["episode"]) for r in rows] == [1, 2, 3]
        assert all(np.isfinite(float(r["mean_reward"])) for r in rows)
        assert (out / "eval.csv").exists()
        expected = {"qlearning": "qtable.txt", "dqn": "dqn.npz", "sac": "sac.npz"}[agent]
        assert (out / expected).exists()
        assert (out / "policy.sacpolicy").exists() == (agent == "sac")

    @pytest.mark.parametrize("agent", ["qlearning", "dqn", "sac"])
    def test_same_seed_same_runlog(self, tmp_path, agent):
        _, a = short_run(tmp_path, agent, seed=4, name="a")
        _, b = short_run(tmp_path, agent, seed=4, name="b")
        assert payload(a / "runlog.csv") == payload(b / "runlog.csv")
        assert (a / "eval.csv").read_bytes() == (b / "eval.csv").read_bytes()

    def test_different_seed_differs(self, tmp_path):
        _, a = short_run(tmp_path, "dqn", seed=1, name="a")
        _, b = short_run(tmp_path, "dqn", seed=2, name="b")
        assert payload(a / "runlog.csv") != payload(b / "runlog.csv")

    def test_wall_time_only_in_metadata(self, tmp_path):
        _, out = short_run(tmp_path, "qlearning")
        lines = (out / "runlog.csv").read_text().splitlines()
        assert lines[-1].startswith("# wall_seconds=")
        assert all(not line.startswith("#") for line in lines[:-1])

    def test_forcing_files(self, tmp_path):
        spec = SyntheticClimateSpec(300.0, diurnal_amplitude_k=3.0, noise_std_k=0.5, seed=3)
        write_forcing_csv(generate_synthetic(spec, SHORT), tmp_path / "train.csv")
        write_forcing_csv(generate_synthetic(dataclasses.replace(spec, seed=4), SHORT), tmp_path / "eval.csv")
        config = RunConfig(agent="qlearning", city="", forcing=str(tmp_path / "train.csv"),
                           eval_forcing=str(tmp_path / "eval.csv"), episodes=1, episode_steps=SHORT)
        result = train_run(config)
        assert result.eval_forcing.t_canopy_k[0] != result.train_forcing.t_canopy_k[0]

    @pytest.mark.slow
    def test_qlearning_improves_on_hot_city(self):
        # 50 full training years on a hot, noisy synthetic climate
        spec = SyntheticClimateSpec(303.0, diurnal_amplitude_k=4.0, noise_std_k=1.0, seed=1)
        forcing = generate_synthetic(spec, EPISODE_STEPS)
        agent = make_agent("qlearning", 0, 0)
        log = train_agent(agent, make_env(forcing, "discrete", RewardConfig()), 50, 0)
        assert np.mean(log.mean_rewards[-10:]) > np.mean(log.mean_rewards[:10])


class TestEvaluate:
    def test_default_controller_zero_spread(self):
        forcing = generate_synthetic(SyntheticClimateSpec(301.0, diurnal_amplitude_k=3.0, noise_std_k=1.0), SHORT)
        result = evaluate(default_controller_for("singapore"), forcing, episodes=3, episode_steps=SHORT)
        assert result.std == 0.0 and len(result.episode_means) == 3

    def test_hvac_off_inside_band(self):
        # canopy and inner nodes pinned at 294 K keep the indoor air inside [291.15, 297.15]
        forcing = generate_synthetic(SyntheticClimateSpec(294.0), SHORT)
        off = FixedController(HvacSetpoints(328.15, 258.15, 0.3))
        result = evaluate(off, forcing, RewardConfig(), 2, SHORT)
        assert result.mean == pytest.approx(-5.4, abs=1e-9)

    def test_sac_deterministic_twice(self):
        forcing = generate_synthetic(SyntheticClimateSpec(290.0, diurnal_amplitude_k=5.0, noise_std_k=1.0), SHORT)
        agent = SacAgent(seed=5)
        a = evaluate(controller_for(agent), forcing, episodes=1, episode_steps=SHORT)
        b = evaluate(controller_for(agent), forcing, episodes=1, episode_steps=SHORT)
        assert a.mean == b.mean

    def test_stochastic_sac_is_seeded(self):
        forcing = generate_synthetic(SyntheticClimateSpec(290.0, diurnal_amplitude_k=5.0), SHORT)
        agent = SacAgent(seed=5)
        runs = [evaluate(controller_for(agent, False), forcing, episodes=2, episode_steps=SHORT, seed=1)
                for _ in range(2)]
        assert runs[0].episode_means == runs[1].episode_means
        assert runs[0].std > 0.0

    def test_trace_reconstructs_mean(self):
        forcing = generate_synthetic(SyntheticClimateSpec(288.0, diurnal_amplitude_k=8.0, noise_std_k=1.0), SHORT)
        result = evaluate(default_controller_for("beijing"), forcing, episodes=1, episode_steps=SHORT)
        assert reward_at_weight(result.traces[0], 0.1) == pytest.approx(result.mean, abs=1e-9)

    @pytest.mark.parametrize("agent,filename", [
        ("sac", "sac.npz"), ("sac", "policy.sacpolicy"), ("dqn", "dqn.npz"), ("qlearning", "qtable.txt"),
    ])
    def test_checkpoint_fidelity(self, tmp_path, agent, filename):
        result, out = short_run(tmp_path, agent)
        in_memory = evaluate(controller_for(result.agent), result.eval_forcing, episodes=1, episode_steps=SHORT)
        reloaded = evaluate(load_controller(out / filename), result.eval_forcing, episodes=1, episode_steps=SHORT)
        assert reloaded.mean == pytest.approx(in_memory.mean, abs=1e-9)

    def test_missing_checkpoint(self, tmp_path):
        with pytest.raises(ConfigError):
            load_controller(tmp_path / "nope.npz")
