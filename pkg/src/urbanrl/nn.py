"""Small float64 multilayer perceptrons with hand-written backprop and Adam."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("relu", "identity", "tanh")


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "relu"

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ValueError(f"bad layer shapes {self.weight.shape} / {self.bias.shape}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def n_in(self) -> int:
        return self.weight.shape[1]

    @property
    def n_out(self) -> int:
        return self.weight.shape[0]


def _activate(z: np.ndarray, kind: str) -> np.ndarray:
    if kind == "relu":
        return np.maximum(z, 0.0)
    if kind == "tanh":
        return np.tanh(z)
    return z


class Mlp:
    """A chain of affine layers, each followed by its activation."""

    def __init__(self, layers: list[Layer]):
        if not layers:
            raise ValueError("an Mlp needs at least one layer")
        for a, b in zip(layers, layers[1:]):
            if a.n_out != b.n_in:
                raise ValueError(f"layer dimensions do not chain: {a.n_out} -> {b.n_in}")
        self.layers = layers
        self._buffers: dict = {}

    @classmethod
    def init(cls, sizes, rng: np.random.Generator, hidden: str = "relu", output: str = "identity") -> "Mlp":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialisation for weights and biases."""
        layers = []
        for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            bound = 1.0 / np.sqrt(n_in)
            w = rng.uniform(-bound, bound, size=(n_out, n_in))
            b = rng.uniform(-bound, bound, size=n_out)
            layers.append(Layer(w, b, output if i == len(sizes) - 2 else hidden))
        return cls(layers)

    @property
    def sizes(self) -> list[int]:
        return [self.layers[0].n_in] + [layer.n_out for layer in self.layers]

    def params(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out += [layer.weight, layer.bias]
        return out

    def copy(self) -> "Mlp":
        return Mlp([Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers])

    def load_params(self, other: "Mlp") -> None:
        for dst, src in zip(self.params(), other.params()):
            dst[...] = src

    def polyak(self, source: "Mlp", tau: float) -> None:
        """In place: self <- tau * source + (1 - tau) * self."""
        for dst, src in zip(self.params(), source.params()):
            dst *= 1.0 - tau
            dst += tau * src

    def _check_input(self, x: np.ndarray) -> None:
        if x.shape[-1] != self.layers[0].n_in:
            raise ValueError(f"input dimension {x.shape[-1]} != {self.layers[0].n_in}")

    def _scratch(self, key, shape) -> np.ndarray:
        """Reusable work array; avoids re-faulting large temporaries every update."""
        buf = self._buffers.get(key)
        if buf is None or buf.shape != shape:
            buf = self._buffers[key] = np.empty(shape)
        return buf

    def forward(self, x, reuse: bool = False) -> np.ndarray:
        """Apply the network to one vector or a batch of row vectors.

        With ``reuse`` the result lives in an internal buffer that the next
        ``reuse`` call on this network overwrites.
        """
        x = np.asarray(x, dtype=np.float64)
        self._check_input(x)
        if reuse and x.ndim == 2:
            return self.forward_cache(x, reuse=True)[0]
        h = x
        for layer in self.layers:
            h = _activate(h @ layer.weight.T + layer.bias, layer.activation)
        return h

    def forward_cache(self, x, reuse: bool = False):
        """Forward pass on a batch (N, in) keeping what :meth:`backward` needs."""
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        self._check_input(x)
        cache = []
        h = x
        for i, layer in enumerate(self.layers):
            if reuse:
                out = np.matmul(h, layer.weight.T, out=self._scratch(("f", i), (len(h), layer.n_out)))
                out += layer.bias
                if layer.activation == "relu":
                    np.maximum(out, 0.0, out=out)
                elif layer.activation == "tanh":
                    np.tanh(out, out=out)
            else:
                out = _activate(h @ layer.weight.T + layer.bias, layer.activation)
            cache.append((h, out))
            h = out
        return h, cache

    def backward(self, cache, grad_out, need_input_grad: bool = True, param_grads: bool = True,
                 reuse: bool = False):
        """Reverse-mode gradients.

        Returns ``(param_grads, input_grad)`` where ``param_grads`` follows the
        order of :meth:`params` (None entries when ``param_grads`` is False).
        With ``reuse`` the returned arrays are internal buffers, valid until
        the next ``reuse`` call on this network.
        """
        g = np.atleast_2d(np.asarray(grad_out, dtype=np.float64))
        grads: list[np.ndarray] = [None] * (2 * len(self.layers))
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            h_in, out = cache[i]
            if g.shape != out.shape:
                raise ValueError(f"upstream gradient shape {g.shape} != output shape {out.shape}")
            if layer.activation != "identity":
                local = self._scratch(("d", i), out.shape) if reuse else np.empty(out.shape)
                if layer.activation == "relu":
                    np.greater(out, 0.0, out=local)
                else:
                    np.multiply(out, out, out=local)
                    np.subtract(1.0, local, out=local)
                g = np.multiply(g, local, out=local)
            if param_grads:
                if reuse:
                    grads[2 * i] = np.matmul(g.T, h_in, out=self._scratch(("gw", i), layer.weight.shape))
                    grads[2 * i + 1] = np.sum(g, axis=0, out=self._scratch(("gb", i), layer.bias.shape))
                else:
                    grads[2 * i] = g.T @ h_in
                    grads[2 * i + 1] = g.sum(axis=0)
            if i > 0 or need_input_grad:
                if reuse:
                    g = np.matmul(g, layer.weight, out=self._scratch(("gx", i), (len(g), layer.n_in)))
                else:
                    g = g @ layer.weight
        return grads, (g if need_input_grad else None)

    def to_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for i, layer in enumerate(self.layers):
            out[f"w{i}"] = layer.weight
            out[f"b{i}"] = layer.bias
        return out

    def activations(self) -> list[str]:
        return [layer.activation for layer in self.layers]

    @classmethod
    def from_arrays(cls, arrays, activations) -> "Mlp":
        return cls([
            Layer(np.array(arrays[f"w{i}"]), np.array(arrays[f"b{i}"]), act)
            for i, act in enumerate(activations)
        ])


@dataclass
class Adam:
    """Bias-corrected Adam over a fixed list of parameter arrays, updated in place."""

    params: list[np.ndarray]
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    _tmp: list[np.ndarray] = field(default_factory=list, init=False, repr=False)

    def __post_init__(self):
        if not self.m:
            self.m = [np.zeros_like(p) for p in self.params]
            self.v = [np.zeros_like(p) for p in self.params]
        self._tmp = [np.empty_like(p) for p in self.params]

    def step(self, grads) -> None:
        if len(grads) != len(self.params):
            raise ValueError("gradient list does not match parameter list")
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2_sqrt = np.sqrt(1.0 - self.beta2**self.t)
        step_size = self.lr / bc1
        for p, g, m, v, tmp in zip(self.params, grads, self.m, self.v, self._tmp):
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            # in place: m = b1 m + (1 - b1) g, v = b2 v + (1 - b2) g^2,
            # p -= lr / bc1 * m / (sqrt(v) / sqrt(bc2) + eps)
            m *= self.beta1
            np.multiply(g, 1.0 - self.beta1, out=tmp)
            m += tmp
            v *= self.beta2
            np.multiply(g, g, out=tmp)
            tmp *= 1.0 - self.beta2
            v += tmp
            np.sqrt(v, out=tmp)
            tmp /= bc2_sqrt
            tmp += self.eps
            np.divide(m, tmp, out=tmp)
            tmp *= step_size
            p -= tmp

    def state_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        out = {f"{prefix}t": np.array(self.t)}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"{prefix}m{i}"] = m
            out[f"{prefix}v{i}"] = v
        return out

    def load_state(self, arrays, prefix: str) -> None:
        self.t = int(arrays[f"{prefix}t"])
        for i in range(len(self.params)):
            self.m[i][...] = arrays[f"{prefix}m{i}"]
            self.v[i][...] = arrays[f"{prefix}v{i}"]


def adam_step(params, grads, state: Adam | None = None, lr: float = 1e-3) -> Adam:
    """Functional wrapper: apply one Adam update to ``params`` in place and return the state."""
    state = state if state is not None else Adam(list(params), lr=lr)
    state.step(grads)
    return state
