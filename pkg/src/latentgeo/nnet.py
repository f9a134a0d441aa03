"""Small dense networks in double precision.

Batch convention: every batch is a 2-D array of shape ``(n_samples, dim)``,
one sample per row. Weights are stored ``(out, in)`` so a layer computes
``h @ W.T + b``.

Besides plain forward/backward this module provides the derivative products
the rest of the package needs: input Jacobians, forward-mode Jacobian-vector
products, and the parameter gradient of an input-gradient (used by the
WGAN-GP penalty).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

FORMAT_VERSION = 1
ACTIVATIONS = ("linear", "relu", "leaky_relu", "tanh", "sigmoid")


def _sigmoid(a):
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


def activate(name, a, slope=0.0):
    if name == "linear":
        return a
    if name == "relu":
        return np.maximum(a, 0.0)
    if name == "leaky_relu":
        return np.where(a >= 0, a, slope * a)
    if name == "tanh":
        return np.tanh(a)
    if name == "sigmoid":
        return _sigmoid(a)
    raise ValueError(f"unknown activation {name!r}")


def activate_deriv(name, a, h, slope=0.0):
    """First derivative of the activation, given pre-activation ``a`` and output ``h``.

    relu/leaky_relu use the right derivative at 0.
    """
    if name == "linear":
        return np.ones_like(a)
    if name == "relu":
        return (a >= 0).astype(a.dtype)
    if name == "leaky_relu":
        return np.where(a >= 0, 1.0, slope)
    if name == "tanh":
        return 1.0 - h * h
    if name == "sigmoid":
        return h * (1.0 - h)
    raise ValueError(f"unknown activation {name!r}")


def activate_deriv2(name, a, h, slope=0.0):
    if name in ("linear", "relu", "leaky_relu"):
        return np.zeros_like(a)
    if name == "tanh":
        return -2.0 * h * (1.0 - h * h)
    if name == "sigmoid":
        return h * (1.0 - h) * (1.0 - 2.0 * h)
    raise ValueError(f"unknown activation {name!r}")


@dataclass
class Layer:
    weight: np.ndarray
    bias: np.ndarray
    activation: str = "linear"
    slope: float = 0.0

    def __post_init__(self):
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ValueError(
                f"layer shapes inconsistent: weight {self.weight.shape}, bias {self.bias.shape}"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def in_dim(self):
        return self.weight.shape[1]

    @property
    def out_dim(self):
        return self.weight.shape[0]


@dataclass
class Mlp:
    """Feed-forward network used as generator, discriminator/critic or feature map."""

    layers: list[Layer]

    def __post_init__(self):
        if not self.layers:
            raise ValueError("an Mlp needs at least one layer")
        for k in range(1, len(self.layers)):
            if self.layers[k].in_dim != self.layers[k - 1].out_dim:
                raise ValueError(
                    f"layer {k} expects input dim {self.layers[k].in_dim}, "
                    f"previous layer emits {self.layers[k - 1].out_dim}"
                )

    @property
    def input_dim(self):
        return self.layers[0].in_dim

    @property
    def output_dim(self):
        return self.layers[-1].out_dim

    def params(self):
        """Flat list of parameter arrays, ordered ``[W0, b0, W1, b1, ...]``.

        The arrays are the live storage; mutating them mutates the network.
        """
        out = []
        for layer in self.layers:
            out.extend([layer.weight, layer.bias])
        return out

    def set_params(self, params):
        for k, layer in enumerate(self.layers):
            layer.weight = np.array(params[2 * k], dtype=np.float64)
            layer.bias = np.array(params[2 * k + 1], dtype=np.float64)

    def copy(self):
        return Mlp([Layer(l.weight.copy(), l.bias.copy(), l.activation, l.slope)
                    for l in self.layers])

    def __call__(self, batch):
        return forward(self, batch)


def build_mlp(sizes, hidden_activation="leaky_relu", output_activation="linear",
              slope=0.2, rng=None):
    """Create an Mlp with layer widths ``sizes`` and random initial weights.

    relu-type layers get He scaling ``sqrt(2 / fan_in)``, the rest Xavier
    scaling ``sqrt(2 / (fan_in + fan_out))``. Biases start at zero.
    """
    rng = np.random.default_rng(rng)
    layers = []
    n = len(sizes) - 1
    for k in range(n):
        fan_in, fan_out = sizes[k], sizes[k + 1]
        act = hidden_activation if k < n - 1 else output_activation
        if act in ("relu", "leaky_relu"):
            std = np.sqrt(2.0 / fan_in)
        else:
            std = np.sqrt(2.0 / (fan_in + fan_out))
        w = rng.normal(0.0, std, size=(fan_out, fan_in))
        layers.append(Layer(w, np.zeros(fan_out), act, slope if act == "leaky_relu" else 0.0))
    return Mlp(layers)


def _as_batch(net, batch):
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ValueError(
            f"expected batch of shape (n, {net.input_dim}), got {np.shape(batch)}"
        )
    return x


@dataclass
class Cache:
    """Per-layer inputs, pre-activations and outputs of one forward pass."""

    inputs: list = field(default_factory=list)
    pre: list = field(default_factory=list)
    post: list = field(default_factory=list)

    @property
    def output(self):
        return self.post[-1]


def forward_cache(net, batch):
    h = _as_batch(net, batch)
    cache = Cache()
    for layer in net.layers:
        cache.inputs.append(h)
        a = h @ layer.weight.T + layer.bias
        h = activate(layer.activation, a, layer.slope)
        cache.pre.append(a)
        cache.post.append(h)
    return cache


def forward(net, batch):
    """Evaluate ``net`` on a batch (rows are samples)."""
    return forward_cache(net, batch).output


def logits(net, batch):
    """Pre-activation of the last layer; for a sigmoid head these are logits."""
    return forward_cache(net, batch).pre[-1]


def backward(net, cache, upstream, at_preactivation=False, taps=None):
    """Reverse-mode pass. Returns ``(param_grads, input_grad)``.

    ``upstream`` is the gradient w.r.t. the network output, or w.r.t. the last
    pre-activation when ``at_preactivation`` is set. ``taps`` maps a layer
    index to an extra gradient injected at that layer's output, which lets a
    feature map read several hidden layers at once.
    """
    g = np.asarray(upstream, dtype=np.float64)
    if g.shape != cache.output.shape:
        raise ValueError(f"upstream gradient shape {g.shape} != output shape {cache.output.shape}")
    taps = taps or {}
    grads = [None] * (2 * len(net.layers))
    for k in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[k]
        if k in taps:
            g = g + taps[k]
        if k == len(net.layers) - 1 and at_preactivation:
            ga = g
        else:
            ga = g * activate_deriv(layer.activation, cache.pre[k], cache.post[k], layer.slope)
        grads[2 * k] = ga.T @ cache.inputs[k]
        grads[2 * k + 1] = ga.sum(axis=0)
        g = ga @ layer.weight
    return grads, g


def grad_params(net, batch, upstream):
    """Gradient of ``sum(upstream * forward(net, batch))`` w.r.t. every parameter."""
    cache = forward_cache(net, batch)
    return backward(net, cache, upstream)[0]


def grad_input(net, batch, upstream):
    """Vector-Jacobian product: gradient of ``sum(upstream * forward)`` w.r.t. the batch."""
    cache = forward_cache(net, batch)
    return backward(net, cache, upstream)[1]


def jvp(net, z, v):
    """Forward-mode product ``J(z) @ v`` without forming ``J``.

    ``z`` and ``v`` may be single vectors or matching batches.
    """
    single = np.ndim(z) == 1
    h = _as_batch(net, z)
    dh = np.asarray(v, dtype=np.float64)
    if dh.ndim == 1:
        dh = dh[None, :]
    if dh.shape != h.shape:
        raise ValueError(f"tangent shape {np.shape(v)} does not match input shape {np.shape(z)}")
    for layer in net.layers:
        a = h @ layer.weight.T + layer.bias
        da = dh @ layer.weight.T
        h = activate(layer.activation, a, layer.slope)
        dh = activate_deriv(layer.activation, a, h, layer.slope) * da
    return dh[0] if single else dh


def input_jacobian(net, z):
    """Jacobian of the network output w.r.t. its input.

    A single vector gives an ``(output_dim, input_dim)`` matrix; a batch gives
    ``(n, output_dim, input_dim)``.
    """
    single = np.ndim(z) == 1
    h = _as_batch(net, z)
    n = h.shape[0]
    # tangent stack: (n, width, input_dim)
    dh = np.broadcast_to(np.eye(net.input_dim), (n, net.input_dim, net.input_dim)).copy()
    for layer in net.layers:
        a = h @ layer.weight.T + layer.bias
        da = np.einsum("oi,nij->noj", layer.weight, dh)
        h = activate(layer.activation, a, layer.slope)
        dh = activate_deriv(layer.activation, a, h, layer.slope)[:, :, None] * da
    return dh[0] if single else dh


def input_grad_param_vjp(net, batch, upstream):
    """Parameter gradient of ``sum_n <upstream_n, d out_n / d x_n>`` for a scalar-output net.

    This is the double-backward needed when a loss depends on the input
    gradient of the network, as the WGAN-GP penalty does. Returns
    ``(param_grads, input_grads)`` where ``input_grads`` are the per-sample
    input gradients themselves.
    """
    if net.output_dim != 1:
        raise ValueError("input_grad_param_vjp needs a scalar-output network")
    cache = forward_cache(net, batch)
    L = len(net.layers)
    u_bar = np.asarray(upstream, dtype=np.float64)

    # first backward: deltas[k] = d out / d pre[k], e[k] = W_{k+1}^T delta_{k+1}
    deltas = [None] * L
    es = [None] * L
    last = net.layers[-1]
    deltas[-1] = activate_deriv(last.activation, cache.pre[-1], cache.post[-1], last.slope)
    for k in range(L - 2, -1, -1):
        layer = net.layers[k]
        es[k] = deltas[k + 1] @ net.layers[k + 1].weight
        deltas[k] = activate_deriv(layer.activation, cache.pre[k], cache.post[k], layer.slope) * es[k]
    u = deltas[0] @ net.layers[0].weight
    if u_bar.shape != u.shape:
        raise ValueError(f"upstream shape {u_bar.shape} != input-gradient shape {u.shape}")

    grads = [np.zeros_like(p) for p in net.params()]
    pre_bar = [np.zeros_like(a) for a in cache.pre]

    # adjoint of the backward pass
    grads[0] += deltas[0].T @ u_bar
    d_bar = u_bar @ net.layers[0].weight.T
    for k in range(L - 1):
        layer = net.layers[k]
        d1 = activate_deriv(layer.activation, cache.pre[k], cache.post[k], layer.slope)
        d2 = activate_deriv2(layer.activation, cache.pre[k], cache.post[k], layer.slope)
        e_bar = d1 * d_bar
        pre_bar[k] += d2 * es[k] * d_bar
        grads[2 * (k + 1)] += deltas[k + 1].T @ e_bar
        d_bar = e_bar @ net.layers[k + 1].weight.T
    pre_bar[-1] += activate_deriv2(last.activation, cache.pre[-1], cache.post[-1], last.slope) * d_bar

    # adjoint of the forward pass, driven by the pre-activation adjoints
    g = np.zeros_like(cache.pre[-1])
    for k in range(L - 1, -1, -1):
        layer = net.layers[k]
        ga = pre_bar[k] + g
        grads[2 * k] += ga.T @ cache.inputs[k]
        grads[2 * k + 1] += ga.sum(axis=0)
        if k > 0:
            prev = net.layers[k - 1]
            gh = ga @ layer.weight
            g = activate_deriv(prev.activation, cache.pre[k - 1], cache.post[k - 1], prev.slope) * gh
    return grads, u


class NonFiniteGradient(FloatingPointError):
    pass


@dataclass
class AdamState:
    first_moment: list
    second_moment: list
    step_count: int = 0
    learn_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_opt: float = 1e-8

    @classmethod
    def like(cls, params, learn_rate=1e-3, beta1=0.9, beta2=0.999, eps_opt=1e-8):
        return cls([np.zeros_like(p, dtype=np.float64) for p in params],
                   [np.zeros_like(p, dtype=np.float64) for p in params],
                   0, learn_rate, beta1, beta2, eps_opt)


def adam_step(state, params, grads):
    """One bias-corrected Adam update, applied in place to ``params``.

    Raises NonFiniteGradient (leaving params and state untouched) if any
    gradient entry is nan or inf.
    """
    if len(params) != len(state.first_moment) or len(grads) != len(params):
        raise ValueError("params, grads and optimizer state have different lengths")
    for p, g, m in zip(params, grads, state.first_moment):
        if np.shape(g) != p.shape or m.shape != p.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {np.shape(g)}, state {m.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradient(f"non-finite gradient at optimizer step {state.step_count + 1}")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.learn_rate * (m / c1) / (np.sqrt(v / c2) + state.eps_opt)
    return params, state


# --- checkpoint container -------------------------------------------------

def _net_header(net):
    return [{"activation": l.activation, "slope": l.slope,
             "shape": list(l.weight.shape)} for l in net.layers]


def save_networks(path, nets, meta=None):
    """Write named networks to one ``.npz`` container.

    ``nets`` maps a name to an Mlp. A JSON header records the format version,
    layer shapes and activations; arrays are stored row-major in float64, so
    loading gives back bit-identical parameters.
    """
    header = {"format_version": FORMAT_VERSION,
              "networks": {name: _net_header(net) for name, net in nets.items()},
              "meta": meta or {}}
    arrays = {"__header__": np.frombuffer(json.dumps(header, sort_keys=True).encode(), dtype=np.uint8)}
    for name, net in nets.items():
        for k, layer in enumerate(net.layers):
            arrays[f"{name}/W{k}"] = np.ascontiguousarray(layer.weight)
            arrays[f"{name}/b{k}"] = np.ascontiguousarray(layer.bias)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        np.savez(fh, **arrays)
    tmp.replace(path)


def load_networks(path):
    """Inverse of :func:`save_networks`; returns ``(nets, meta)``."""
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(bytes(data["__header__"]).decode())
        if header.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint format version {header.get('format_version')}")
        nets = {}
        for name, specs in header["networks"].items():
            layers = []
            for k, spec in enumerate(specs):
                w = data[f"{name}/W{k}"]
                b = data[f"{name}/b{k}"]
                if list(w.shape) != spec["shape"]:
                    raise ValueError(f"{name} layer {k}: stored shape {w.shape} != header {spec['shape']}")
                layers.append(Layer(w.astype(np.float64), b.astype(np.float64),
                                    spec["activation"], spec["slope"]))
            nets[name] = Mlp(layers)
    return nets, header.get("meta", {})
