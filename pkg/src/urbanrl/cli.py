"""Command-line interface: ``urbanrl <subcommand> [flags]``.

Exit codes: 0 success, 1 configuration or usage error, 2 runtime failure.
Output directories default to ``$URBANRL_OUT`` (or ``./runs``) when ``--out``
is not given.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import logging
import os
import sys

import numpy as np

from urbanrl import analysis, bem
from urbanrl.agents import AGENT_KINDS, SacAgent
from urbanrl.config import ConfigError, apply_kv, dump_kv, parse_overrides, read_kv
from urbanrl.data import (
    ForcingFormatError,
    SyntheticClimateSpec,
    city_preset,
    city_presets,
    generate_synthetic,
    load_forcing_csv,
    write_forcing_csv,
)
from urbanrl.env import DEFAULT_CONTROLLERS, EPISODE_STEPS, KELVIN, HvacEnv, RewardConfig, default_controller
from urbanrl.policy_io import PolicyFormatError, export_policy
from urbanrl.train import (
    RunConfig,
    building_for,
    default_controller_for,
    evaluate,
    load_controller,
    train_run,
)

logger = logging.getLogger("urbanrl")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2
CITIES = tuple(DEFAULT_CONTROLLERS)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage mistakes are configuration errors (exit 1), not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _out_dir(args, default_name: str) -> str:
    if args.out:
        return args.out
    return os.path.join(os.environ.get("URBANRL_OUT", "runs"), default_name)


def _forcing(args, attr: str = "eval_forcing", steps: int = EPISODE_STEPS):
    path = getattr(args, attr, None)
    if path:
        return load_forcing_csv(path, min_steps=steps)
    if not args.city:
        raise ConfigError(f"need --city or --{attr.replace('_', '-')}")
    preset = city_preset(args.city)
    return preset.eval_forcing(steps) if attr == "eval_forcing" else preset.train_forcing(steps)


def _common_reward_flags(p):
    p.add_argument("--w", type=float, default=0.1, help="reward weight on the energy term [-, 0..1] (default 0.1)")
    p.add_argument("--steps", type=int, default=EPISODE_STEPS,
                   help=f"steps per episode [half-hour steps] (default {EPISODE_STEPS})")


# -- subcommands --------------------------------------------------------------


def cmd_train(args) -> int:
    values = read_kv(args.config) if args.config else {}
    flags = {
        "agent": args.agent, "city": args.city, "forcing": args.forcing, "eval_forcing": args.eval_forcing,
        "episodes": args.episodes, "seed": args.seed, "w": args.w, "out": args.out,
        "eval_episodes": args.eval_episodes, "episode_steps": args.steps,
    }
    values.update({k: str(v) for k, v in flags.items() if v is not None})
    values.update(parse_overrides(args.set))
    if "seed" not in values:
        raise ConfigError("a seed is required for training (--seed or seed= in the config)")
    if values.get("agent", "sac") not in AGENT_KINDS:
        raise ConfigError(f"unknown agent {values['agent']!r}; valid agents: {', '.join(AGENT_KINDS)}")
    if values.get("forcing"):
        values.setdefault("city", "")
    config = apply_kv(RunConfig(), values)
    if config.city:
        city_preset(config.city)
    if not config.out:
        config = dataclasses.replace(
            config, out=os.path.join(os.environ.get("URBANRL_OUT", "runs"),
                                     f"{config.agent}_{config.city or 'custom'}_seed{config.seed}")
        )
    result = train_run(config)
    with open(os.path.join(config.out, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write(dump_kv(config))
    print(f"wrote {os.path.join(config.out, 'runlog.csv')} ({len(result.log.episodes)} episodes)")
    if result.evaluation is not None:
        print(f"eval mean reward {result.evaluation.mean!r} (std {result.evaluation.std!r})")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    forcing = _forcing(args, steps=args.steps)
    reward_config = RewardConfig(w=args.w)
    if args.policy:
        controller = load_controller(args.policy, deterministic=args.deterministic)
        name = os.path.basename(args.policy)
    elif args.city:
        controller = default_controller_for(args.city)
        name = f"default_{args.city}"
    else:
        raise ConfigError("evaluate needs --policy or --city (default controller)")
    result = evaluate(controller, forcing, reward_config, args.episodes, args.steps, seed=args.seed)
    out = _out_dir(args, f"eval_{name}")
    os.makedirs(out, exist_ok=True)
    result.write_csv(os.path.join(out, "eval.csv"))
    print(f"mean reward {result.mean!r} (std {result.std!r}) over {args.episodes} episodes")
    return EXIT_OK


def cmd_sweep(args) -> int:
    if not args.city:
        raise ConfigError("sweep needs --baseline-city")
    forcing = _forcing(args, steps=args.steps)
    reward_config = RewardConfig(w=args.w)
    controller = load_controller(args.policy, deterministic=args.deterministic)
    rl = evaluate(controller, forcing, reward_config, 1, args.steps, seed=args.seed).traces[0]
    base = evaluate(default_controller_for(args.city), forcing, reward_config, 1, args.steps).traces[0]
    rows = analysis.weight_sweep(rl, base, reward_config, args.points)
    crossing = analysis.weight_intersection(rl, base, reward_config)
    out = _out_dir(args, f"sweep_{args.city}")
    os.makedirs(out, exist_ok=True)
    analysis.write_weight_sweep_csv(rows, os.path.join(out, "weight_sweep.csv"))
    analysis.write_monthly_csv(analysis.reward_diff(rl, base, reward_config), os.path.join(out, "monthly_profile.csv"))
    if args.svg:
        analysis.write_sweep_svg(rows, os.path.join(out, "weight_sweep.svg"), crossing)
    print(f"w* = {crossing}")
    return EXIT_OK


def cmd_transfer(args) -> int:
    policies = parse_overrides(args.policies)
    if not policies:
        raise ConfigError("transfer needs --policies city=path entries")
    for city in policies:
        city_preset(city)
    cities = list(policies) if not args.cities else [c.strip() for c in args.cities.split(",")]
    for city in cities:
        city_preset(city)
    reward_config = RewardConfig(w=args.w)
    controllers = {name: load_controller(path, deterministic=True) for name, path in policies.items()}
    matrix = np.zeros((len(controllers), len(cities)))
    baseline = np.zeros(len(cities))
    for j, city in enumerate(cities):
        forcing = city_preset(city).eval_forcing(args.steps)
        baseline[j] = evaluate(default_controller_for(city), forcing, reward_config, 1, args.steps).mean
        for i, controller in enumerate(controllers.values()):
            matrix[i, j] = evaluate(controller, forcing, reward_config, 1, args.steps).mean
    out = _out_dir(args, "transfer")
    os.makedirs(out, exist_ok=True)
    analysis.write_transfer_csv(matrix, list(controllers), cities, os.path.join(out, "transfer_matrix.csv"), baseline)
    scores = analysis.transfer_score(matrix, list(controllers))
    with open(os.path.join(out, "transfer_scores.csv"), "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model", "score"])
        writer.writerows(scores)
    for name, total in scores:
        print(f"{name} {total}")
    return EXIT_OK


def cmd_export(args) -> int:
    if not args.checkpoint:
        raise ConfigError("export needs --checkpoint (a SAC .npz checkpoint)")
    if not os.path.exists(args.checkpoint):
        raise ConfigError(f"checkpoint not found: {args.checkpoint}")
    agent = SacAgent.load(args.checkpoint)
    out = args.out or os.path.splitext(args.checkpoint)[0] + ".sacpolicy"
    export_policy(agent, out)
    print(f"wrote {out}")
    return EXIT_OK


TRAJECTORY_HEADER = (
    "step", "t_canopy_k", "t_roof_k", "t_sunwall_k", "t_shadewall_k", "t_floor_k", "t_indoor_k",
    "f_cool_wm2", "f_heat_wm2", "f_vent_wm2", "f_wasteheat_wm2", "energy_term", "comfort_term", "reward",
)


def cmd_simulate(args) -> int:
    forcing = _forcing(args, "forcing", args.steps)
    if args.setpoints:
        try:
            t_max_c, t_min_c, vent = (float(v) for v in args.setpoints.split(","))
        except ValueError:
            raise ConfigError(f"--setpoints must be 'ac_degC,heat_degC,vent_ach', got {args.setpoints!r}") from None
        setpoints = bem.HvacSetpoints(t_max_c + KELVIN, t_min_c + KELVIN, vent)
    elif args.city:
        setpoints = default_controller(args.city)
    else:
        raise ConfigError("simulate needs --setpoints or --city")
    params = bem.load_building_params(args.building) if args.building else building_for(forcing)
    env = HvacEnv(forcing, params, RewardConfig(w=args.w), episode_steps=args.steps)
    env.reset(seed=0)
    out = args.out or os.path.join(os.environ.get("URBANRL_OUT", "runs"), "trajectory.csv")
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRAJECTORY_HEADER)
        for k in range(args.steps):
            o = env.step_setpoints(setpoints)
            s, f = env.thermal_state, o.fluxes
            writer.writerow([k, repr(forcing.t_canopy_k[k].item())] + [repr(v) for v in (
                s.t_roof_k, s.t_sunwall_k, s.t_shadewall_k, s.t_floor_k, s.t_indoor_k,
                f.f_cool_wm2, f.f_heat_wm2, f.f_vent_wm2, f.f_wasteheat_wm2, o.energy_term, o.comfort_term, o.reward,
            )])
    print(f"wrote {out}")
    return EXIT_OK


def cmd_gen_forcing(args) -> int:
    if args.city:
        preset = city_preset(args.city)
        spec = dataclasses.replace(preset.climate, seed=args.seed)
        label = preset.name
    elif args.mean_k is not None:
        spec = SyntheticClimateSpec(args.mean_k, args.annual_k, args.diurnal_k, args.noise_k, args.lag, args.seed)
        label = "custom"
    else:
        raise ConfigError(f"gen-forcing needs --city ({', '.join(CITIES)}) or --mean-k")
    series = generate_synthetic(spec, args.steps, label)
    out = args.out or os.path.join(os.environ.get("URBANRL_OUT", "runs"), f"forcing_{label}_seed{args.seed}.csv")
    os.makedirs(os.path.dirname(out) or ".", exist_ok=True)
    write_forcing_csv(series, out)
    print(f"wrote {out} ({len(series)} steps)")
    return EXIT_OK


def cmd_presets(args) -> int:
    print("name,latitude_deg,default_ac_k,default_heat_k,mean_k,annual_amplitude_k,diurnal_amplitude_k")
    for p in city_presets():
        c = p.climate
        print(f"{p.name},{p.latitude_deg},{p.default_ac_k},{p.default_heat_k},{c.mean_k},"
              f"{c.annual_amplitude_k},{c.diurnal_amplitude_k}")
    return EXIT_OK


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="urbanrl", description="Surrogate building HVAC control with reinforcement learning.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr [flag]")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train an agent and write runlog.csv, checkpoints and eval.csv")
    p.add_argument("--agent", help=f"agent kind [{'|'.join(AGENT_KINDS)}] (default sac)")
    p.add_argument("--city", help=f"city preset for synthetic forcing [{'|'.join(CITIES)}]")
    p.add_argument("--forcing", help="training forcing CSV [path; temperatures in K]")
    p.add_argument("--eval-forcing", help="held-out evaluation forcing CSV [path; temperatures in K]")
    p.add_argument("--episodes", type=int, help="training episodes [count of 17,520-step years] (default 50)")
    p.add_argument("--eval-episodes", type=int, help="evaluation rollouts after training [count] (default 3)")
    p.add_argument("--seed", type=int, help="random seed [integer] (required)")
    p.add_argument("--w", type=float, help="reward weight on the energy term [-, 0..1] (default 0.1)")
    p.add_argument("--steps", type=int, help=f"steps per episode [half-hour steps] (default {EPISODE_STEPS})")
    p.add_argument("--out", help="output directory [path] (default $URBANRL_OUT/<agent>_<city>_seed<seed>)")
    p.add_argument("--config", help="run configuration file [path; key=value lines]")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one configuration key [key=value; units as in the config file]; repeatable")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a policy or a city's default controller; writes eval.csv")
    p.add_argument("--policy", help="policy artifact (.sacpolicy), checkpoint (.npz) or Q-table [path]")
    p.add_argument("--city", help=f"city preset: held-out forcing and default controller [{'|'.join(CITIES)}]")
    p.add_argument("--eval-forcing", help="evaluation forcing CSV [path; temperatures in K]")
    p.add_argument("--episodes", type=int, default=3, help="evaluation rollouts [count] (default 3)")
    p.add_argument("--seed", type=int, default=0, help="seed for stochastic policies [integer] (default 0)")
    p.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=True,
                   help="use the policy mean instead of sampling [flag] (default on)")
    p.add_argument("--out", help="output directory [path]")
    _common_reward_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="re-score a fixed policy over reward weights; writes weight_sweep.csv")
    p.add_argument("--policy", required=True, help="policy artifact or checkpoint [path]")
    p.add_argument("--baseline-city", dest="city", help=f"city whose default controller is the baseline [{'|'.join(CITIES)}]")
    p.add_argument("--eval-forcing", help="evaluation forcing CSV [path; temperatures in K] (default: city held-out year)")
    p.add_argument("--points", type=int, default=101, help="weight grid points over [0, 1] [count] (default 101)")
    p.add_argument("--seed", type=int, default=0, help="seed for stochastic policies [integer] (default 0)")
    p.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=True,
                   help="use the policy mean instead of sampling [flag] (default on)")
    p.add_argument("--svg", action="store_true", help="also write weight_sweep.svg [flag]")
    p.add_argument("--out", help="output directory [path]")
    _common_reward_flags(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("transfer", help="evaluate every trained policy in every city; writes transfer_matrix.csv")
    p.add_argument("--policies", action="append", metavar="CITY=PATH",
                   help="policy trained in CITY [city=path]; repeat once per model")
    p.add_argument("--cities", help="comma-separated evaluation cities [names] (default: the policy cities)")
    p.add_argument("--out", help="output directory [path]")
    _common_reward_flags(p)
    p.set_defaults(func=cmd_transfer)

    p = sub.add_parser("export", help="write the policy artifact of a SAC checkpoint")
    p.add_argument("--checkpoint", help="SAC checkpoint [path, .npz]")
    p.add_argument("--out", help="artifact to write [path] (default: checkpoint with .sacpolicy)")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("simulate", help="run the building model under fixed setpoints; writes a trajectory CSV")
    p.add_argument("--city", help=f"city preset: training-year forcing and default setpoints [{'|'.join(CITIES)}]")
    p.add_argument("--forcing", help="forcing CSV [path; temperatures in K]")
    p.add_argument("--setpoints", help="fixed setpoints 'ac,heat,vent' [degC, degC, air changes per hour]")
    p.add_argument("--building", help="building parameter file [path; key=value, SI units]")
    p.add_argument("--out", help="trajectory CSV to write [path]")
    _common_reward_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gen-forcing", help="generate a synthetic forcing CSV")
    p.add_argument("--city", help=f"use the city's climate preset [{'|'.join(CITIES)}]")
    p.add_argument("--mean-k", type=float, help="mean canopy temperature [K]")
    p.add_argument("--annual-k", type=float, default=0.0, help="annual amplitude [K] (default 0)")
    p.add_argument("--diurnal-k", type=float, default=0.0, help="diurnal amplitude [K] (default 0)")
    p.add_argument("--noise-k", type=float, default=0.0, help="Gaussian noise standard deviation [K] (default 0)")
    p.add_argument("--lag", type=int, default=0, help="inner-node lag [half-hour steps] (default 0)")
    p.add_argument("--steps", type=int, default=EPISODE_STEPS, help=f"series length [half-hour steps] (default {EPISODE_STEPS})")
    p.add_argument("--seed", type=int, default=0, help="noise seed [integer] (default 0)")
    p.add_argument("--out", help="CSV to write [path]")
    p.set_defaults(func=cmd_gen_forcing)

    p = sub.add_parser("presets", help="list the city presets")
    p.set_defaults(func=cmd_presets)
    return parser


CONFIG_ERRORS = (UsageError, ConfigError, ForcingFormatError, PolicyFormatError, KeyError)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CONFIG_ERRORS as exc:
        message = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {message}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - report, never traceback, at the CLI boundary
        logger.debug("runtime failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
