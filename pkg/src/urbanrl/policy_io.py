"""Plain-text SAC policy artifacts and a dependency-free matmul inference path.

File layout::

    SACPOLICY 1
    5 256 256 6
    <one line per weight row of layer 0>
    <bias line of layer 0>
    ... repeated for every layer ...
    <action lower bounds>
    <action upper bounds>

Numbers are written with ``repr`` (shortest round-trip form), so loading a
written artifact reproduces every parameter bit for bit. Hidden layers use
ReLU, the last layer is affine; its first half holds the action means and its
second half the raw log-std head. Observation normalisation is folded into
layer 0, so an artifact consumes raw observations (K, K, ach, K, K).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from urbanrl.agents.common import ACTION_DIM, OBS_CENTER, OBS_DIM, OBS_SCALE
from urbanrl.env import ACTION_HIGH, ACTION_LOW

MAGIC = "SACPOLICY"
VERSION = 1


class PolicyFormatError(ValueError):
    pass


@dataclass
class PolicyArtifact:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    lower: np.ndarray
    upper: np.ndarray
    # evaluation mode; not part of the file
    deterministic: bool = True
    log_std_min: float = -5.0
    log_std_max: float = 2.0

    def __post_init__(self):
        self.weights = [np.asarray(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.asarray(b, dtype=np.float64) for b in self.biases]
        self.lower = np.asarray(self.lower, dtype=np.float64)
        self.upper = np.asarray(self.upper, dtype=np.float64)
        if not self.weights or len(self.weights) != len(self.biases):
            raise PolicyFormatError("need one bias vector per weight matrix")
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise PolicyFormatError(f"layer {i}: weight {w.shape} and bias {b.shape} disagree")
            if i and w.shape[1] != self.weights[i - 1].shape[0]:
                raise PolicyFormatError(f"layer {i}: input {w.shape[1]} != previous output {self.weights[i - 1].shape[0]}")
        n_out = self.weights[-1].shape[0]
        if n_out % 2:
            raise PolicyFormatError(f"output layer must hold mean and log-std heads, got {n_out} rows")
        if self.lower.shape != (n_out // 2,) or self.upper.shape != (n_out // 2,):
            raise PolicyFormatError("bounds must have one entry per action dimension")
        if not np.all(self.lower < self.upper):
            raise PolicyFormatError("action lower bounds must be below upper bounds")

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def action_dim(self) -> int:
        return self.weights[-1].shape[0] // 2

    def identical_to(self, other: "PolicyArtifact") -> bool:
        pairs = list(zip(self.weights, other.weights)) + list(zip(self.biases, other.biases))
        return (
            self.sizes == other.sizes
            and all(np.array_equal(a, b) for a, b in pairs)
            and np.array_equal(self.lower, other.lower)
            and np.array_equal(self.upper, other.upper)
        )


def artifact_from_agent(agent) -> PolicyArtifact:
    """Copy a SAC policy network, folding observation normalisation into layer 0."""
    layers = agent.policy.layers
    if [layer.activation for layer in layers[:-1]] != ["relu"] * (len(layers) - 1) or layers[-1].activation != "identity":
        raise ValueError("only ReLU hidden layers with an affine output are exportable")
    weights = [layer.weight.copy() for layer in layers]
    biases = [layer.bias.copy() for layer in layers]
    # W ((x - c) / s) + b  ==  (W / s) x + (b - W (c / s))
    biases[0] = biases[0] - weights[0] @ (OBS_CENTER / OBS_SCALE)
    weights[0] = weights[0] / OBS_SCALE
    return PolicyArtifact(
        weights, biases, ACTION_LOW.copy(), ACTION_HIGH.copy(),
        log_std_min=agent.config.log_std_min, log_std_max=agent.config.log_std_max,
    )


def _line(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def write_policy(artifact: PolicyArtifact, path: str | os.PathLike) -> None:
    lines = [f"{MAGIC} {VERSION}", " ".join(str(n) for n in artifact.sizes)]
    for w, b in zip(artifact.weights, artifact.biases):
        lines.extend(_line(row) for row in w)
        lines.append(_line(b))
    lines.append(_line(artifact.lower))
    lines.append(_line(artifact.upper))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def export_policy(agent, path: str | os.PathLike) -> PolicyArtifact:
    artifact = artifact_from_agent(agent)
    write_policy(artifact, path)
    return artifact


def _floats(line: str, expected: int, path, lineno: int) -> np.ndarray:
    parts = line.split()
    if len(parts) != expected:
        raise PolicyFormatError(f"{path}:{lineno}: expected {expected} numbers, got {len(parts)}")
    try:
        values = np.array([float(p) for p in parts])
    except ValueError:
        raise PolicyFormatError(f"{path}:{lineno}: unparsable number") from None
    if not np.all(np.isfinite(values)):
        raise PolicyFormatError(f"{path}:{lineno}: non-finite value")
    return values


def load_policy(path: str | os.PathLike, expect_obs_dim: int = OBS_DIM,
                expect_action_dim: int = ACTION_DIM) -> PolicyArtifact:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].split() != [MAGIC, str(VERSION)]:
        raise PolicyFormatError(f"{path}:1: expected header '{MAGIC} {VERSION}'")
    try:
        sizes = [int(v) for v in lines[1].split()] if len(lines) > 1 else []
    except ValueError:
        raise PolicyFormatError(f"{path}:2: layer sizes must be integers") from None
    if len(sizes) < 2 or any(n < 1 for n in sizes):
        raise PolicyFormatError(f"{path}:2: need at least two positive layer sizes")
    if sizes[0] != expect_obs_dim or sizes[-1] != 2 * expect_action_dim:
        raise PolicyFormatError(
            f"{path}:2: sizes {sizes} do not map {expect_obs_dim} observations to "
            f"{expect_action_dim} mean + {expect_action_dim} log-std outputs"
        )
    expected_lines = 2 + sum(n_out + 1 for n_out in sizes[1:]) + 2
    if len(lines) != expected_lines:
        raise PolicyFormatError(f"{path}: {len(lines)} lines, sizes {sizes} imply {expected_lines}")
    cursor = 2
    weights, biases = [], []
    for n_in, n_out in zip(sizes[:-1], sizes[1:]):
        rows = [_floats(lines[cursor + r], n_in, path, cursor + r + 1) for r in range(n_out)]
        cursor += n_out
        weights.append(np.stack(rows))
        biases.append(_floats(lines[cursor], n_out, path, cursor + 1))
        cursor += 1
    lower = _floats(lines[cursor], expect_action_dim, path, cursor + 1)
    upper = _floats(lines[cursor + 1], expect_action_dim, path, cursor + 2)
    return PolicyArtifact(weights, biases, lower, upper)


def matmul_inference(artifact: PolicyArtifact, observation, rng: np.random.Generator | None = None) -> np.ndarray:
    """Action for one raw observation using only mat-vec products, adds, tanh and rescaling.

    Uses the mean head when ``artifact.deterministic``; otherwise draws from the
    squashed Gaussian with ``rng``.
    """
    h = np.asarray(observation, dtype=np.float64)
    if h.shape != (artifact.sizes[0],):
        raise ValueError(f"observation must have shape ({artifact.sizes[0]},), got {h.shape}")
    last = len(artifact.weights) - 1
    for i, (w, b) in enumerate(zip(artifact.weights, artifact.biases)):
        h = w @ h + b
        if i < last:
            h = np.maximum(h, 0.0)
    k = artifact.action_dim
    u = h[:k]
    if not artifact.deterministic:
        if rng is None:
            raise ValueError("stochastic inference needs an rng")
        lo, hi = artifact.log_std_min, artifact.log_std_max
        log_std = lo + 0.5 * (hi - lo) * (np.tanh(h[k:]) + 1.0)
        u = u + np.exp(log_std) * rng.standard_normal(k)
    half = 0.5 * (artifact.upper - artifact.lower)
    return artifact.lower + half + half * np.tanh(u)


__all__ = [
    "MAGIC", "VERSION", "PolicyArtifact", "PolicyFormatError", "artifact_from_agent", "export_policy",
    "load_policy", "matmul_inference", "write_policy",
]
