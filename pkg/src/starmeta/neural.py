"""Dense feed-forward networks with hand-written backpropagation."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("relu", "tanh", "linear")
CHECKPOINT_FORMAT = "starmeta-densenet"
CHECKPOINT_VERSION = 1


def _act(name, z):
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return z


def _act_grad(name, z, a, g):
    if name == "relu":
        return g * (z > 0)
    if name == "tanh":
        return g * (1.0 - a * a)
    return g


@dataclass
class DenseNet:
    """Weights are ``(fan_in, fan_out)``; inputs are batches of rows."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activations: list[str]
    output_scale: float = 1.0

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ValueError("weights, biases and activations must have equal length")
        for i in range(1, len(self.weights)):
            if self.weights[i].shape[0] != self.weights[i - 1].shape[1]:
                raise ValueError(f"layer {i} fan_in does not match layer {i - 1} fan_out")
        for name in self.activations:
            if name not in ACTIVATIONS:
                raise ValueError(f"unknown activation {name!r}")

    @classmethod
    def create(
        cls, sizes, hidden="relu", output="linear", rng=None, final_scale=None, dtype="float64", output_scale=1.0
    ):
        """Uniform ``+-1/sqrt(fan_in)`` init; ``final_scale`` overrides the last layer bound.

        ``output_scale`` multiplies the final activation (e.g. a scaled tanh).
        """
        rng = np.random.default_rng(rng)
        dtype = np.dtype(dtype)
        ws, bs = [], []
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            bound = 1.0 / np.sqrt(a)
            if final_scale is not None and i == len(sizes) - 2:
                bound = final_scale
            ws.append(rng.uniform(-bound, bound, size=(a, b)).astype(dtype))
            bs.append(rng.uniform(-bound, bound, size=b).astype(dtype))
        acts = [hidden] * (len(sizes) - 2) + [output]
        return cls(ws, bs, acts, float(output_scale))

    @property
    def dtype(self):
        return self.weights[0].dtype

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def set_params(self, params) -> None:
        params = list(params)
        self.weights = [np.array(p) for p in params[0::2]]
        self.biases = [np.array(p) for p in params[1::2]]

    def copy(self) -> "DenseNet":
        return DenseNet(
            [w.copy() for w in self.weights], [b.copy() for b in self.biases], list(self.activations), self.output_scale
        )

    def __call__(self, x):
        return forward(self, x)[0]


@dataclass
class Cache:
    inputs: list[np.ndarray]
    preacts: list[np.ndarray]
    outputs: list[np.ndarray]
    net_id: int


def forward(net: DenseNet, x):
    """Returns ``(output, cache)``; a 1-D input is treated as a batch of one."""
    x = np.asarray(x, dtype=net.dtype)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != net.weights[0].shape[0]:
        raise ValueError(f"input width {x.shape[1]} != fan_in {net.weights[0].shape[0]}")
    ins, zs, outs = [], [], []
    a = x
    for w, b, name in zip(net.weights, net.biases, net.activations):
        ins.append(a)
        z = a @ w + b
        a = _act(name, z)
        zs.append(z)
        outs.append(a)
    if net.output_scale != 1.0:
        a = a * net.output_scale
    return a, Cache(ins, zs, outs, id(net))


def backward(net: DenseNet, cache: Cache, grad_out):
    """Reverse-mode pass; returns ``(param_grads, grad_input)``.

    ``param_grads`` is ordered like ``net.params()``.
    """
    if cache.net_id != id(net) or len(cache.inputs) != len(net.weights):
        raise ValueError("cache does not belong to this network")
    g = np.asarray(grad_out, dtype=net.dtype)
    if g.shape != cache.outputs[-1].shape:
        raise ValueError(f"gradient shape {g.shape} != output shape {cache.outputs[-1].shape}")
    if net.output_scale != 1.0:
        g = g * net.output_scale
    grads = [None] * (2 * len(net.weights))
    for i in reversed(range(len(net.weights))):
        g = _act_grad(net.activations[i], cache.preacts[i], cache.outputs[i], g)
        grads[2 * i] = cache.inputs[i].T @ g
        grads[2 * i + 1] = g.sum(axis=0)
        g = g @ net.weights[i].T
    return grads, g


@dataclass
class Adam:
    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0

    def step(self, net: DenseNet, grads) -> None:
        params = net.params()
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        new = []
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            new.append(p - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps))
        net.set_params(new)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {"t": np.array(self.t), "lr": np.array(self.lr)}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"m{i}"] = m
            out[f"v{i}"] = v
        return out

    def load_state_arrays(self, arrays) -> None:
        self.t = int(arrays["t"])
        self.lr = float(arrays["lr"])
        n = sum(1 for k in arrays if k.startswith("m"))
        self.m = [np.array(arrays[f"m{i}"]) for i in range(n)]
        self.v = [np.array(arrays[f"v{i}"]) for i in range(n)]


@dataclass
class SGD:
    lr: float

    def step(self, net: DenseNet, grads) -> None:
        net.set_params([p - self.lr * g for p, g in zip(net.params(), grads)])

    def state_arrays(self):
        return {"lr": np.array(self.lr)}

    def load_state_arrays(self, arrays):
        self.lr = float(arrays["lr"])


def adam_update(net: DenseNet, grads, state: Adam) -> DenseNet:
    state.step(net, grads)
    return net


def soft_update(target: DenseNet, online: DenseNet, rate: float) -> DenseNet:
    """Blend ``target <- rate * online + (1 - rate) * target`` in place."""
    if (
        target.sizes != online.sizes
        or target.activations != online.activations
        or target.output_scale != online.output_scale
    ):
        raise ValueError("target and online architectures differ")
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"soft-update rate must lie in [0, 1], got {rate}")
    target.set_params([rate * o + (1.0 - rate) * t for t, o in zip(target.params(), online.params())])
    return target


def flops_count(sizes, act_cost: float = 1.0) -> float:
    """Operation count ``2 * sum((2 z_i - 1) z_{i+1} + act_cost * z_{i+1})`` over connections."""
    sizes = list(sizes)
    return 2.0 * sum((2 * a - 1) * b + act_cost * b for a, b in zip(sizes[:-1], sizes[1:]))


def layer_products(sizes) -> int:
    """Leading-order term ``sum z_i z_{i+1}``."""
    sizes = list(sizes)
    return int(sum(a * b for a, b in zip(sizes[:-1], sizes[1:])))


def net_to_arrays(net: DenseNet, prefix: str = "") -> dict[str, np.ndarray]:
    header = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "sizes": net.sizes,
        "activations": net.activations,
        "output_scale": net.output_scale,
    }
    flat = np.concatenate([p.ravel() for p in net.params()])
    return {prefix + "header": np.array(json.dumps(header)), prefix + "params": flat}


def net_from_arrays(arrays, prefix: str = "") -> DenseNet:
    header = json.loads(str(arrays[prefix + "header"]))
    if header.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"not a {CHECKPOINT_FORMAT} checkpoint")
    if header.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {header.get('version')}")
    sizes, flat = header["sizes"], np.asarray(arrays[prefix + "params"])
    ws, bs, i = [], [], 0
    for a, b in zip(sizes[:-1], sizes[1:]):
        ws.append(flat[i : i + a * b].reshape(a, b))
        i += a * b
        bs.append(flat[i : i + b].copy())
        i += b
    if i != flat.size:
        raise ValueError("parameter array length does not match the architecture header")
    return DenseNet(ws, bs, header["activations"], float(header.get("output_scale", 1.0)))


def save_net(net: DenseNet, path) -> None:
    np.savez(path, **net_to_arrays(net))


def load_net(path) -> DenseNet:
    with np.load(path) as data:
        return net_from_arrays(data)
