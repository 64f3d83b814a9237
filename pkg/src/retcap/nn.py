"""Small tanh MLPs on a flat parameter vector, with hand-written backprop and Adam.

Layer ``i`` owns a weight block of shape ``(fan_in, fan_out)`` followed by a
bias block of shape ``(fan_out,)``; both are views into ``ParamVector.values``
so the optimizer sees one contiguous array.
"""

from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class StateError(RuntimeError):
    """Backward requested without a recorded forward pass."""


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden: tuple[int, ...]
    output_dim: int
    activation: str = "tanh"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if not self.hidden:
            raise ValueError("MlpSpec needs at least one hidden layer")
        if min(self.input_dim, self.output_dim, *self.hidden) <= 0:
            raise ValueError("all layer sizes must be positive")
        if self.activation != "tanh":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, self.output_dim)

    @property
    def layout(self) -> list[tuple[int, tuple[int, int]]]:
        return [(i, (a, b)) for i, (a, b) in enumerate(zip(self.dims[:-1], self.dims[1:]))]

    @property
    def n_params(self) -> int:
        return sum(a * b + b for _, (a, b) in self.layout)

    def header(self) -> str:
        hidden = ",".join(str(h) for h in self.hidden)
        return f"mlp input={self.input_dim} hidden={hidden} output={self.output_dim} activation={self.activation}"

    @classmethod
    def from_header(cls, line: str) -> "MlpSpec":
        parts = line.split()
        if not parts or parts[0] != "mlp":
            raise ValueError(f"not an MLP checkpoint header: {line!r}")
        kv = dict(p.split("=", 1) for p in parts[1:])
        return cls(
            int(kv["input"]),
            tuple(int(h) for h in kv["hidden"].split(",")),
            int(kv["output"]),
            kv.get("activation", "tanh"),
        )


@dataclass
class ParamVector:
    values: np.ndarray
    grads: np.ndarray
    layout: list[tuple[int, tuple[int, int]]]
    _tape: list | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.values.shape != self.grads.shape:
            raise ValueError("values and grads must have equal length")

    def __len__(self) -> int:
        return self.values.size

    def layers(self, arr: np.ndarray | None = None):
        """Yield ``(W, b)`` views of ``arr`` (default: the values)."""
        arr = self.values if arr is None else arr
        off = 0
        for _, (a, b) in self.layout:
            w = arr[off : off + a * b].reshape(a, b)
            off += a * b
            yield w, arr[off : off + b]
            off += b

    def zero_grad(self) -> None:
        self.grads[:] = 0.0

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.grads.copy(), list(self.layout))


def mlp_init(spec: MlpSpec, seed: int, output_scale: float = 1.0) -> ParamVector:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.

    ``output_scale`` shrinks the last layer's bound; a small value starts a
    policy head close to uniform.
    """
    rng = np.random.default_rng(seed)
    values = np.zeros(spec.n_params)
    pv = ParamVector(values, np.zeros_like(values), spec.layout)
    layers = list(pv.layers())
    for i, (w, _) in enumerate(layers):
        bound = 1.0 / np.sqrt(w.shape[0])
        if i == len(layers) - 1:
            bound *= output_scale
        w[...] = rng.uniform(-bound, bound, size=w.shape)
    return pv


def mlp_forward(params: ParamVector, spec: MlpSpec, x) -> np.ndarray:
    """Forward pass on one input vector or a ``(batch, input_dim)`` array.

    Records the activations on ``params`` for a following ``backward``.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[-1] != spec.input_dim:
        raise ValueError(f"input has {h.shape[-1]} features, network expects {spec.input_dim}")
    tape = [h]
    layers = list(params.layers())
    for w, b in layers[:-1]:
        h = np.tanh(h @ w + b)
        tape.append(h)
    w, b = layers[-1]
    out = h @ w + b
    params._tape = (tape, single)
    return out[0] if single else out


def backward(params: ParamVector, loss_grad) -> None:
    """Accumulate d(loss)/d(values) into ``params.grads`` given d(loss)/d(output)."""
    if params._tape is None:
        raise StateError("backward called without a recorded forward pass")
    tape, single = params._tape
    g = np.asarray(loss_grad, dtype=np.float64)
    if single:
        g = g[None, :]
    grad_layers = list(params.layers(params.grads))
    value_layers = list(params.layers())
    for i in range(len(value_layers) - 1, -1, -1):
        h_in = tape[i]
        gw, gb = grad_layers[i]
        gw += h_in.T @ g
        gb += g.sum(axis=0)
        if i > 0:
            # tanh' = 1 - tanh^2, and tape[i] holds tanh outputs
            g = (g @ value_layers[i][0].T) * (1.0 - h_in * h_in)


class Mlp:
    """Convenience pairing of a spec with its parameters."""

    def __init__(self, spec: MlpSpec, seed: int = 0, params: ParamVector | None = None,
                 output_scale: float = 1.0):
        self.spec = spec
        self.params = params if params is not None else mlp_init(spec, seed, output_scale)

    def __call__(self, x) -> np.ndarray:
        return mlp_forward(self.params, self.spec, x)

    def backward(self, loss_grad) -> None:
        backward(self.params, loss_grad)


def categorical_head(logits) -> tuple[np.ndarray, np.ndarray]:
    """Softmax probabilities and log-probabilities along the last axis."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    log_probs = z - log_norm
    return np.exp(log_probs), log_probs


def sample_action(probs, rng: np.random.Generator):
    """Inverse-CDF draw; ``probs`` may be one distribution or a batch of rows."""
    p = np.asarray(probs, dtype=np.float64)
    single = p.ndim == 1
    p2 = p[None, :] if single else p
    cdf = np.cumsum(p2, axis=-1)
    u = rng.random(p2.shape[0]) * cdf[:, -1]
    idx = (cdf <= u[:, None]).sum(axis=-1)
    idx = np.minimum(idx, p2.shape[-1] - 1)
    return int(idx[0]) if single else idx


class Adam:
    """Bias-corrected Adam on a ParamVector; zeroes the grads after each step."""

    def __init__(self, params: ParamVector, lr: float = 1e-3, betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.m = np.zeros_like(params.values)
        self.v = np.zeros_like(params.values)
        self.t = 0

    def step(self) -> None:
        g = self.params.grads
        self.t += 1
        self.m *= self.beta1
        self.m += (1.0 - self.beta1) * g
        self.v *= self.beta2
        self.v += (1.0 - self.beta2) * (g * g)
        m_hat = self.m / (1.0 - self.beta1**self.t)
        v_hat = self.v / (1.0 - self.beta2**self.t)
        self.params.values -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
        if not np.all(np.isfinite(self.params.values)):
            raise FloatingPointError("non-finite parameter after an Adam step")
        self.params.zero_grad()

    def state_dict(self) -> dict:
        return {"m": self.m.copy(), "v": self.v.copy(), "t": self.t}

    def load_state_dict(self, state: dict) -> None:
        self.m[:] = state["m"]
        self.v[:] = state["v"]
        self.t = int(state["t"])


def adam_step(params: ParamVector, lr: float, betas=(0.9, 0.999), eps: float = 1e-8, optimizer: Adam | None = None) -> Adam:
    """Functional form of one Adam step. Pass the returned optimizer back in to keep moments."""
    opt = optimizer or Adam(params, lr, betas, eps)
    opt.lr, (opt.beta1, opt.beta2), opt.eps = lr, betas, eps
    opt.step()
    return opt


# Checkpoint format: one ASCII header line (MlpSpec.header()) terminated by "\n",
# then len(values) little-endian float64 values, nothing else.

def save_params(path, spec: MlpSpec, params: ParamVector) -> None:
    path = Path(path)
    buf = io.BytesIO()
    buf.write((spec.header() + "\n").encode("ascii"))
    buf.write(params.values.astype("<f8").tobytes())
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(buf.getvalue())
    os.replace(tmp, path)


def load_params(path) -> tuple[MlpSpec, ParamVector]:
    raw = Path(path).read_bytes()
    nl = raw.index(b"\n")
    spec = MlpSpec.from_header(raw[:nl].decode("ascii"))
    body = raw[nl + 1 :]
    if len(body) != 8 * spec.n_params:
        raise ValueError(f"checkpoint holds {len(body) // 8} values, header implies {spec.n_params}")
    values = np.frombuffer(body, dtype="<f8").astype(np.float64)
    return spec, ParamVector(values, np.zeros_like(values), spec.layout)
