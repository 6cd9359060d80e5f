"""Small dense networks with hand-written gradients.

Besides ordinary backpropagation this module computes the parameter
gradient of the WGAN-GP gradient penalty, mean over rows of
``(||dD/dx||_2 - 1)**2``, by differentiating through the input-gradient
computation. For piecewise-linear activations the activation slopes are
locally constant in the parameters, so the second-order pass reduces to a
forward propagation of the penalty's input-space gradient through the
linearized network.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

CHECKPOINT_VERSION = 1
PIECEWISE_LINEAR = ("leaky_relu", "relu", "identity")
ACTIVATIONS = PIECEWISE_LINEAR + ("sigmoid",)


class NetError(ValueError):
    pass


@dataclass
class Layer:
    weight: np.ndarray  # out x in
    bias: np.ndarray  # out
    activation: str = "identity"
    slope: float = 0.2  # leaky_relu only

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise NetError(f"unknown activation {self.activation!r}")
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise NetError("bias must match the weight's output dimension")


@dataclass
class DenseNet:
    layers: list[Layer]

    def __post_init__(self):
        if not self.layers:
            raise NetError("a network needs at least one layer")
        for k in range(1, len(self.layers)):
            if self.layers[k].weight.shape[1] != self.layers[k - 1].weight.shape[0]:
                raise NetError(f"layer {k} input size does not match layer {k - 1} output size")

    @property
    def in_dim(self) -> int:
        return self.layers[0].weight.shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].weight.shape[0]

    def params(self) -> list[np.ndarray]:
        """Parameters in optimizer order: W1, b1, W2, b2, ..."""
        out = []
        for layer in self.layers:
            out += [layer.weight, layer.bias]
        return out

    def copy(self) -> "DenseNet":
        return DenseNet([Layer(l.weight.copy(), l.bias.copy(), l.activation, l.slope) for l in self.layers])

    def __call__(self, x):
        return forward(self, x)[1]


@dataclass
class GradientBundle:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    inputs: np.ndarray | None = None
    skipped_rows: int = 0
    value: float | None = None

    def params(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def scaled(self, c: float) -> "GradientBundle":
        return GradientBundle([c * w for w in self.weights], [c * b for b in self.biases],
                              None if self.inputs is None else c * self.inputs)

    def __add__(self, other: "GradientBundle") -> "GradientBundle":
        inputs = None
        if self.inputs is not None and other.inputs is not None:
            inputs = self.inputs + other.inputs
        return GradientBundle([a + b for a, b in zip(self.weights, other.weights)],
                              [a + b for a, b in zip(self.biases, other.biases)], inputs)


@dataclass
class Cache:
    """Per-layer inputs and pre-activations retained by :func:`forward`."""
    inputs: list[np.ndarray] = field(default_factory=list)
    pre: list[np.ndarray] = field(default_factory=list)
    out: np.ndarray | None = None


def _activate(z, layer):
    act = layer.activation
    if act == "identity":
        return z
    if act == "relu":
        return np.maximum(z, 0.0)
    if act == "leaky_relu":
        return np.where(z > 0, z, layer.slope * z)
    return 1.0 / (1.0 + np.exp(-z))


def _slope(z, layer, out=None):
    """Elementwise derivative of the activation at pre-activation ``z``."""
    act = layer.activation
    if act == "identity":
        return np.ones_like(z)
    if act == "relu":
        return (z > 0).astype(z.dtype)
    if act == "leaky_relu":
        return np.where(z > 0, 1.0, layer.slope)
    s = out if out is not None else _activate(z, layer)
    return s * (1.0 - s)


def forward(net: DenseNet, batch) -> tuple[Cache, np.ndarray]:
    x = np.asarray(batch, dtype=float)
    if x.ndim != 2 or x.shape[1] != net.in_dim:
        raise NetError(f"batch of shape {x.shape} does not fit input dimension {net.in_dim}")
    cache = Cache()
    h = x
    for layer in net.layers:
        cache.inputs.append(h)
        z = h @ layer.weight.T + layer.bias
        cache.pre.append(z)
        h = _activate(z, layer)
    cache.out = h
    return cache, h


def backward(net: DenseNet, cache: Cache, upstream) -> GradientBundle:
    """Gradients of ``sum(upstream * output)`` w.r.t. parameters and inputs."""
    g = np.asarray(upstream, dtype=float)
    if g.shape != cache.out.shape:
        raise NetError(f"upstream gradient shape {g.shape} does not match output {cache.out.shape}")
    n = len(net.layers)
    gw, gb = [None] * n, [None] * n
    for k in range(n - 1, -1, -1):
        layer = net.layers[k]
        out = cache.out if k == n - 1 else cache.inputs[k + 1]
        delta = g * _slope(cache.pre[k], layer, out)
        gw[k] = delta.T @ cache.inputs[k]
        gb[k] = delta.sum(axis=0)
        g = delta @ layer.weight
    return GradientBundle(gw, gb, g)


def input_gradient(net: DenseNet, x) -> np.ndarray:
    """Row i is the gradient of the scalar output i w.r.t. input row i."""
    if net.out_dim != 1:
        raise NetError("input_gradient needs a scalar-output network")
    cache, out = forward(net, x)
    return backward(net, cache, np.ones_like(out)).inputs


def penalty_parameter_gradient(critic: DenseNet, x_hat) -> GradientBundle:
    """Parameter gradient of ``mean_i (||grad_x D(x_hat_i)|| - 1)**2``.

    Rows whose input-gradient norm is exactly zero are non-differentiable;
    they are left out of the gradient and counted in ``skipped_rows``. The
    penalty value itself (over all rows) is returned in ``value``.
    """
    if critic.out_dim != 1:
        raise NetError("the gradient penalty needs a scalar-output critic")
    for layer in critic.layers:
        if layer.activation not in PIECEWISE_LINEAR:
            raise NetError(f"double backward needs piecewise-linear activations, got {layer.activation!r}")

    cache, out = forward(critic, x_hat)
    n = len(critic.layers)
    slopes = [_slope(z, l) for z, l in zip(cache.pre, critic.layers)]

    # deltas[k]: gradient of the output w.r.t. the pre-activation of layer k
    deltas = [None] * n
    g = np.ones_like(out)
    for k in range(n - 1, -1, -1):
        deltas[k] = g * slopes[k]
        g = deltas[k] @ critic.layers[k].weight
    u = g
    norms = np.sqrt(np.sum(u * u, axis=1))
    batch = u.shape[0]
    value = float(np.mean((norms - 1.0) ** 2))

    ok = norms > 0
    tau = np.zeros_like(u)
    tau[ok] = (2.0 / batch) * ((norms[ok] - 1.0) / norms[ok])[:, None] * u[ok]

    # Push dP/du forward through the linearized net; the biases do not
    # enter the input gradient, so their gradient is zero.
    gw, gb = [], []
    for k, layer in enumerate(critic.layers):
        gw.append(deltas[k].T @ tau)
        gb.append(np.zeros_like(layer.bias))
        tau = (tau @ layer.weight.T) * slopes[k]
    return GradientBundle(gw, gb, None, skipped_rows=int(batch - ok.sum()), value=value)


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    @classmethod
    def for_net(cls, net: DenseNet, **hyper) -> "AdamState":
        params = net.params()
        return cls(m=[np.zeros_like(p) for p in params], v=[np.zeros_like(p) for p in params], **hyper)


def adam_step(net: DenseNet, grads: GradientBundle, state: AdamState) -> tuple[DenseNet, AdamState]:
    """One in-place Adam update with bias correction and decoupled decay."""
    params, gs = net.params(), grads.params()
    if len(params) != len(gs) or any(p.shape != g.shape for p, g in zip(params, gs)):
        raise NetError("gradient shapes do not match parameters")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    shrink = 1.0 - state.lr * state.weight_decay
    for p, g, m, v in zip(params, gs, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        if state.weight_decay:
            p *= shrink
    return net, state


def init_net(layer_sizes, activations, seed=0, slope: float = 0.2) -> DenseNet:
    """Uniform fan-in initialization, He-scaled for (leaky) ReLU layers."""
    sizes = list(layer_sizes)
    if len(sizes) < 2:
        raise NetError("layer_sizes needs an input size and at least one layer")
    if isinstance(activations, str):
        activations = [activations] * (len(sizes) - 1)
    if len(activations) != len(sizes) - 1:
        raise NetError(f"{len(sizes) - 1} layers but {len(activations)} activations")
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out, act in zip(sizes[:-1], sizes[1:], activations):
        if act == "leaky_relu":
            bound = np.sqrt(6.0 / ((1.0 + slope ** 2) * fan_in))
        elif act == "relu":
            bound = np.sqrt(6.0 / fan_in)
        else:
            bound = np.sqrt(3.0 / fan_in)
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        layers.append(Layer(w, np.zeros(fan_out), act, slope))
    return DenseNet(layers)


def net_to_arrays(net: DenseNet, prefix: str = "") -> dict:
    meta = [{"activation": l.activation, "slope": l.slope} for l in net.layers]
    arrays = {f"{prefix}meta": np.array(json.dumps({"version": CHECKPOINT_VERSION, "layers": meta}))}
    for k, layer in enumerate(net.layers):
        arrays[f"{prefix}W{k}"] = layer.weight
        arrays[f"{prefix}b{k}"] = layer.bias
    return arrays


def net_from_arrays(arrays, prefix: str = "") -> DenseNet:
    meta = json.loads(str(arrays[f"{prefix}meta"]))
    if meta.get("version") != CHECKPOINT_VERSION:
        raise NetError(f"unsupported checkpoint version {meta.get('version')!r}")
    layers = []
    for k, info in enumerate(meta["layers"]):
        layers.append(Layer(np.array(arrays[f"{prefix}W{k}"], dtype=float),
                            np.array(arrays[f"{prefix}b{k}"], dtype=float),
                            info["activation"], float(info["slope"])))
    return DenseNet(layers)


def save_net(net: DenseNet, path) -> None:
    np.savez(path, **net_to_arrays(net))


def load_net(path) -> DenseNet:
    with np.load(path) as data:
        return net_from_arrays(data)


def net_to_bytes(net: DenseNet) -> bytes:
    buf = io.BytesIO()
    np.savez(buf, **net_to_arrays(net))
    return buf.getvalue()


def net_to_dict(net: DenseNet) -> dict:
    """JSON-ready form; float repr round-trips exactly."""
    return {"version": CHECKPOINT_VERSION,
            "layers": [{"weight": l.weight.tolist(), "bias": l.bias.tolist(),
                        "activation": l.activation, "slope": l.slope} for l in net.layers]}


def net_from_dict(d: dict) -> DenseNet:
    if d.get("version") != CHECKPOINT_VERSION:
        raise NetError(f"unsupported checkpoint version {d.get('version')!r}")
    return DenseNet([Layer(np.array(l["weight"], dtype=float).reshape(len(l["bias"]), -1),
                           np.array(l["bias"], dtype=float), l["activation"], float(l["slope"]))
                     for l in d["layers"]])
