"""Small fully connected network with manual backprop and Adam.

Parameters are stored as a flat list ``[W0, b0, W1, b1, ...]`` with ``W`` of shape
``(fan_in, fan_out)``; gradient lists use the same order.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CHECKPOINT_VERSION = "skyroute-mlp v1"
HEADS = ("linear", "softmax")


class NonFiniteError(FloatingPointError):
    """A loss, gradient or parameter became NaN/inf."""


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float | None = 5.0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")


def relu(x):
    return np.maximum(x, 0.0)


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def global_norm(grads) -> float:
    return math.sqrt(sum(float(np.vdot(g, g)) for g in grads))


def clip_by_global_norm(grads, max_norm: float):
    norm = global_norm(grads)
    if not math.isfinite(norm):
        raise NonFiniteError("non-finite gradient norm")
    if norm > max_norm:
        scale = max_norm / norm
        return [g * scale for g in grads]
    return grads


class Mlp:
    """ReLU MLP with a linear or softmax output head.

    ``init="he"`` draws He-uniform weights from ``rng``; ``init="zeros"`` gives an
    all-zero network. ``zero_output=True`` keeps He hidden layers but starts the
    output layer at zero, so the initial output is exactly ``output_bias``.
    """

    def __init__(
        self, input_dim, output_dim, hidden=(64, 64, 64), head="linear", rng=None, init="he", zero_output=False, output_bias=0.0
    ):
        if input_dim <= 0 or output_dim <= 0 or any(h <= 0 for h in hidden):
            raise ValueError("all layer widths must be positive")
        if head not in HEADS:
            raise ValueError(f"head must be one of {HEADS}")
        self.input_dim = int(input_dim)
        self.output_dim = int(output_dim)
        self.hidden = tuple(int(h) for h in hidden)
        self.head = head
        dims = [self.input_dim, *self.hidden, self.output_dim]
        if rng is None or isinstance(rng, (int, np.integer)):
            rng = np.random.default_rng(rng)
        self.params: list[np.ndarray] = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            if init == "he":
                limit = math.sqrt(6.0 / fan_in)
                w = rng.uniform(-limit, limit, size=(fan_in, fan_out))
            elif init == "zeros":
                w = np.zeros((fan_in, fan_out))
            else:
                raise ValueError(f"unknown init {init!r}")
            self.params += [w, np.zeros(fan_out)]
        if zero_output:
            self.params[-2][...] = 0.0
        self.params[-1][...] = output_bias
        self.reset_optimizer()

    @property
    def n_layers(self) -> int:
        return len(self.params) // 2

    @property
    def architecture(self) -> tuple:
        return self.input_dim, self.hidden, self.output_dim, self.head

    def reset_optimizer(self):
        self.adam_m = [np.zeros_like(p) for p in self.params]
        self.adam_v = [np.zeros_like(p) for p in self.params]
        self.adam_t = 0

    def _check_input(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.input_dim or x.ndim > 2:
            raise ValueError(f"expected input of width {self.input_dim}, got shape {x.shape}")
        return x

    def forward(self, x) -> np.ndarray:
        """Network output for one input vector or a batch of rows."""
        a = self._check_input(x)
        p = self.params
        last = self.n_layers - 1
        for i in range(last):
            a = a @ p[2 * i] + p[2 * i + 1]
            a = np.maximum(a, 0.0)
        z = a @ p[2 * last] + p[2 * last + 1]
        return softmax(z) if self.head == "softmax" else z

    __call__ = forward

    def backward(self, x, output_gradient) -> list[np.ndarray]:
        """Gradients of a scalar loss w.r.t. every parameter.

        ``output_gradient`` is dLoss/dOutput (the softmax probabilities for a softmax
        head). Batched inputs accumulate gradients over rows.
        """
        x = self._check_input(x)
        g = np.asarray(output_gradient, dtype=np.float64)
        if g.shape[-1] != self.output_dim:
            raise ValueError(f"expected output gradient of width {self.output_dim}, got shape {g.shape}")
        batched = x.ndim == 2
        if not batched:
            x = x[None, :]
            g = g.reshape(1, -1)
        p = self.params
        acts = [x]
        a = x
        last = self.n_layers - 1
        for i in range(last):
            a = np.maximum(a @ p[2 * i] + p[2 * i + 1], 0.0)
            acts.append(a)
        z = a @ p[2 * last] + p[2 * last + 1]
        if self.head == "softmax":
            probs = softmax(z)
            delta = probs * (g - (g * probs).sum(axis=1, keepdims=True))
        else:
            delta = g
        grads = [None] * len(p)
        for i in range(last, -1, -1):
            a_in = acts[i]
            grads[2 * i] = a_in.T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ p[2 * i].T) * (a_in > 0.0)
        return grads

    def adam_step(self, grads, config: AdamConfig):
        """One bias-corrected Adam update, after optional global-norm clipping."""
        if len(grads) != len(self.params) or any(g.shape != q.shape for g, q in zip(grads, self.params)):
            raise ValueError("gradient shapes do not match parameters")
        if config.clip_norm is not None:
            grads = clip_by_global_norm(grads, config.clip_norm)
        elif not math.isfinite(global_norm(grads)):
            raise NonFiniteError("non-finite gradient")
        self.adam_t += 1
        b1, b2 = config.beta1, config.beta2
        corr1 = 1.0 - b1**self.adam_t
        corr2 = 1.0 - b2**self.adam_t
        lr = config.learning_rate
        for q, g, m, v in zip(self.params, grads, self.adam_m, self.adam_v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            q -= lr * (m / corr1) / (np.sqrt(v / corr2) + config.eps)

    def copy(self) -> "Mlp":
        clone = object.__new__(Mlp)
        clone.__dict__.update(self.__dict__)
        clone.params = [p.copy() for p in self.params]
        clone.adam_m = [m.copy() for m in self.adam_m]
        clone.adam_v = [v.copy() for v in self.adam_v]
        return clone

    def load_params_from(self, other: "Mlp"):
        _check_same(self, other)
        for q, p in zip(self.params, other.params):
            q[...] = p

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.params)

    def to_dict(self) -> dict:
        return {
            "version": CHECKPOINT_VERSION,
            "input_dim": self.input_dim,
            "output_dim": self.output_dim,
            "hidden": list(self.hidden),
            "head": self.head,
            "params": [p.tolist() for p in self.params],
            "adam_m": [m.tolist() for m in self.adam_m],
            "adam_v": [v.tolist() for v in self.adam_v],
            "adam_t": self.adam_t,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Mlp":
        if data.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported network checkpoint version {data.get('version')!r}")
        net = cls(data["input_dim"], data["output_dim"], data["hidden"], data["head"], init="zeros")
        for target, key in ((net.params, "params"), (net.adam_m, "adam_m"), (net.adam_v, "adam_v")):
            values = data[key]
            if len(values) != len(target):
                raise ValueError(f"checkpoint {key} has {len(values)} arrays, expected {len(target)}")
            for i, v in enumerate(values):
                arr = np.array(v, dtype=np.float64)
                if arr.shape != target[i].shape:
                    raise ValueError(f"checkpoint {key}[{i}] shape {arr.shape} != {target[i].shape}")
                target[i] = arr
        net.adam_t = int(data["adam_t"])
        return net

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "Mlp":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _check_same(a: Mlp, b: Mlp):
    if a.architecture != b.architecture:
        raise ValueError(f"architecture mismatch: {a.architecture} vs {b.architecture}")


def soft_update(target: Mlp, source: Mlp, tau: float) -> Mlp:
    """Blend in place: ``target <- tau * target + (1 - tau) * source``.

    ``tau`` is the weight kept on the old target, so ``tau=1`` freezes it and
    ``tau=0`` copies the source.
    """
    if not 0.0 <= tau <= 1.0:
        raise ValueError("tau must lie in [0, 1]")
    _check_same(target, source)
    for t, s in zip(target.params, source.params):
        if tau == 0.0:
            t[...] = s
        elif tau != 1.0:
            t *= tau
            t += (1.0 - tau) * s
    return target
