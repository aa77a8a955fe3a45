"""Post-hoc comparisons of evaluated controllers: reward differences, weight sweeps, transfer scores."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

from urbanrl.env import RewardConfig

N_MONTHS = 12


@dataclass(frozen=True, eq=False)
class TermTrace:
    """Per-step energy and comfort terms of one evaluation rollout."""

    energy: np.ndarray
    comfort: np.ndarray
    step: np.ndarray | None = None

    def __post_init__(self):
        energy = np.asarray(self.energy, dtype=float)
        comfort = np.asarray(self.comfort, dtype=float)
        if energy.shape != comfort.shape or energy.ndim != 1:
            raise ValueError(f"energy {energy.shape} and comfort {comfort.shape} traces must be equal-length 1-d")
        if np.any(energy < 0) or np.any(comfort < 0):
            raise ValueError("reward terms must be non-negative")
        step = np.arange(len(energy)) if self.step is None else np.asarray(self.step)
        if step.shape != energy.shape:
            raise ValueError("step index length differs from the traces")
        object.__setattr__(self, "energy", energy)
        object.__setattr__(self, "comfort", comfort)
        object.__setattr__(self, "step", step)

    def __len__(self) -> int:
        return len(self.energy)

    def rewards(self, config: RewardConfig) -> np.ndarray:
        return -config.w * config.lambda_p * self.energy - (1.0 - config.w) * config.lambda_t * self.comfort

    def mean_energy(self) -> float:
        return float(np.mean(self.energy))

    def mean_comfort(self) -> float:
        return float(np.mean(self.comfort))


def concat_traces(traces) -> TermTrace:
    traces = list(traces)
    return TermTrace(np.concatenate([t.energy for t in traces]), np.concatenate([t.comfort for t in traces]))


def reward_at_weight(trace: TermTrace, w: float, config: RewardConfig | None = None) -> float:
    """Mean reward of a fixed rollout re-scored at weight ``w``; affine in ``w``."""
    if not 0.0 <= w <= 1.0:
        raise ValueError(f"w must lie in [0, 1], got {w}")
    config = config or RewardConfig()
    e = config.lambda_p * trace.mean_energy()
    c = config.lambda_t * trace.mean_comfort()
    return -w * e - (1.0 - w) * c


@dataclass(frozen=True)
class RewardDiff:
    value: float
    monthly: np.ndarray


def month_slices(n_steps: int, n_months: int = N_MONTHS) -> list[slice]:
    """Consecutive equal-as-possible buckets; 17,520 steps give 12 x 1,460."""
    edges = np.linspace(0, n_steps, n_months + 1).round().astype(int)
    return [slice(a, b) for a, b in zip(edges[:-1], edges[1:])]


def reward_diff(rl: TermTrace, baseline: TermTrace, config: RewardConfig | None = None) -> RewardDiff:
    """Mean per-step reward of ``rl`` minus ``baseline``, overall and per month."""
    if len(rl) != len(baseline):
        raise ValueError(f"trace lengths differ: {len(rl)} vs {len(baseline)}")
    if len(rl) == 0:
        raise ValueError("empty traces")
    config = config or RewardConfig()
    diff = rl.rewards(config) - baseline.rewards(config)
    monthly = np.array([np.mean(diff[s]) if s.stop > s.start else np.nan for s in month_slices(len(diff))])
    return RewardDiff(float(np.mean(diff)), monthly)


@dataclass(frozen=True)
class Intersection:
    """Crossing weight of two R(w) lines; ``coincident`` when they overlap everywhere."""

    w: float | None
    coincident: bool = False

    def __str__(self) -> str:
        if self.coincident:
            return "coincident"
        return "none" if self.w is None else repr(self.w)


def intersection_from_means(e_rl: float, c_rl: float, e_base: float, c_base: float) -> Intersection:
    """Solve -w e_r - (1-w) c_r = -w e_b - (1-w) c_b for w in [0, 1]."""
    dc = c_base - c_rl
    de = e_base - e_rl
    denom = dc - de
    if denom == 0.0:
        return Intersection(None, coincident=dc == 0.0)
    w = dc / denom
    return Intersection(w if 0.0 <= w <= 1.0 else None)


def weight_intersection(rl: TermTrace, baseline: TermTrace, config: RewardConfig | None = None) -> Intersection:
    config = config or RewardConfig()
    return intersection_from_means(
        config.lambda_p * rl.mean_energy(), config.lambda_t * rl.mean_comfort(),
        config.lambda_p * baseline.mean_energy(), config.lambda_t * baseline.mean_comfort(),
    )


def weight_sweep(rl: TermTrace, baseline: TermTrace, config: RewardConfig | None = None,
                 n_points: int = 101) -> list[tuple[float, float, float]]:
    """Rows (w, R_rl(w), R_baseline(w)) on an even grid over [0, 1]."""
    if n_points < 2:
        raise ValueError("need at least two grid points")
    grid = np.linspace(0.0, 1.0, n_points)
    return [(float(w), reward_at_weight(rl, w, config), reward_at_weight(baseline, w, config)) for w in grid]


def transfer_ranks(matrix) -> np.ndarray:
    """Within-column ranks: best model scores n_models, worst scores 1; ties favour earlier rows."""
    m = np.asarray(matrix, dtype=float)
    if m.ndim != 2 or m.size == 0:
        raise ValueError("transfer matrix must be a non-empty 2-d array")
    if not np.all(np.isfinite(m)):
        raise ValueError("transfer matrix has non-finite entries")
    n_models = m.shape[0]
    ranks = np.zeros(m.shape, dtype=int)
    for j in range(m.shape[1]):
        # stable sort on -reward keeps earlier models ahead among ties
        order = np.argsort(-m[:, j], kind="stable")
        ranks[order, j] = np.arange(n_models, 0, -1)
    return ranks


def transfer_score(matrix, models=None) -> list[tuple[str, int]]:
    """Total rank score per model (rows = trained-in city, columns = evaluated-in city), best first."""
    ranks = transfer_ranks(matrix)
    models = list(models) if models is not None else [str(i) for i in range(ranks.shape[0])]
    if len(models) != ranks.shape[0]:
        raise ValueError("one model name per matrix row is required")
    totals = ranks.sum(axis=1)
    order = np.argsort(-totals, kind="stable")
    return [(models[i], int(totals[i])) for i in order]


# -- reports ------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def write_weight_sweep_csv(rows, path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["w", "reward_rl", "reward_baseline"])
        for w, r, b in rows:
            writer.writerow([_fmt(w), _fmt(r), _fmt(b)])


def write_monthly_csv(profile: RewardDiff, path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["month", "reward_diff"])
        for i, v in enumerate(profile.monthly, start=1):
            writer.writerow([i, _fmt(v)])


def write_transfer_csv(matrix, models, eval_cities, path: str | os.PathLike, baseline=None) -> None:
    m = np.asarray(matrix, dtype=float)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["model"] + list(eval_cities))
        for name, row in zip(models, m):
            writer.writerow([name] + [_fmt(v) for v in row])
        if baseline is not None:
            writer.writerow(["baseline"] + [_fmt(v) for v in baseline])


def write_sweep_svg(rows, path: str | os.PathLike, intersection: Intersection | None = None) -> None:
    """Line chart of R(w) for both controllers; needs matplotlib."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    w, r, b = (np.array(col) for col in zip(*rows))
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(w, r, label="RL policy")
    ax.plot(w, b, label="default controller", linestyle="--")
    if intersection is not None and intersection.w is not None:
        ax.axvline(intersection.w, color="grey", linewidth=0.8)
    ax.set_xlabel("reward weight w")
    ax.set_ylabel("mean reward per step")
    ax.legend()
    fig.tight_layout()
    # fixed metadata and hash salt keep the SVG byte-stable across runs
    matplotlib.rcParams["svg.hashsalt"] = "urbanrl"
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
