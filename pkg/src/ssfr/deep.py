"""Deep component of the semi-structured model.

Two trunk layouts are supported:

``shared_codec``
    consumes the concatenated quadrature encodings of all predictors, maps them
    through dense layers to U latent coefficients and decodes them with the
    outcome basis, so en- and decoding are shared with the structured part.
``generic``
    consumes the concatenated raw (standardized) predictor values and ends in a
    linear layer with one unit per outcome grid point.

Gradients are computed by explicit reverse accumulation through the cached
forward state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation, InvalidArgumentError
from .structured import encode

ARCHITECTURES = ("shared_codec", "generic")


def _identity(z):
    return z


def _relu(z):
    return np.maximum(z, 0.0)


ACTIVATIONS = {
    "identity": (_identity, lambda z, a: np.ones_like(z)),
    "relu": (_relu, lambda z, a: (z > 0).astype(z.dtype)),
    "tanh": (np.tanh, lambda z, a: 1.0 - a * a),
}


def _check_activation(name):
    if name not in ACTIVATIONS:
        raise InvalidArgumentError(f"unknown activation {name!r}; choose from {sorted(ACTIVATIONS)}")


@dataclass(eq=False)
class DenseLayer:
    weights: np.ndarray
    bias: np.ndarray
    activation: str = "identity"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        _check_activation(self.activation)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise InvalidArgumentError(
                f"bias shape {self.bias.shape} does not match weights {self.weights.shape}"
            )


@dataclass(frozen=True)
class DeepConfig:
    architecture: str = "shared_codec"
    hidden_sizes: tuple = (100,)
    activation: str = "relu"
    dropout_rate: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise InvalidArgumentError(
                f"architecture must be one of {ARCHITECTURES}, got {self.architecture!r}"
            )
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if any(h <= 0 for h in self.hidden_sizes):
            raise InvalidArgumentError("hidden sizes must be positive")
        _check_activation(self.activation)
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InvalidArgumentError("dropout_rate must lie in [0, 1)")


def init_params(config, input_dim, output_dim, seed=None):
    """Glorot-uniform weights, zero biases; hidden layers use ``config.activation``."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    sizes = [int(input_dim), *config.hidden_sizes, int(output_dim)]
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        act = config.activation if i < len(sizes) - 2 else "identity"
        layers.append(DenseLayer(w, np.zeros(fan_out), act))
    return layers


@dataclass
class ForwardCache:
    version: int
    inputs: np.ndarray
    pre: list
    post: list
    masks: list


class DeepNet:
    """Dense trunk plus (for ``shared_codec``) a fixed outcome-basis decoder."""

    def __init__(self, config, layers, t_eval=None):
        self.config = config
        self.layers = list(layers)
        self.t_eval = None if t_eval is None else np.asarray(t_eval, dtype=np.float64)
        self.version = 0
        if config.architecture == "shared_codec":
            if self.t_eval is None:
                raise InvalidArgumentError("shared_codec needs the outcome basis evaluations")
            if self.layers[-1].weights.shape[0] != self.t_eval.shape[0]:
                raise InvalidArgumentError("last layer width must equal the outcome basis size")
        for a, b in zip(self.layers[:-1], self.layers[1:]):
            if a.weights.shape[0] != b.weights.shape[1]:
                raise InvalidArgumentError("consecutive layer shapes do not chain")

    @classmethod
    def create(cls, config, input_dim, num_outputs, t_eval=None):
        """``num_outputs`` is U for ``shared_codec`` (taken from ``t_eval``) and Q for ``generic``."""
        if config.architecture == "shared_codec":
            num_outputs = t_eval.shape[0]
        return cls(config, init_params(config, input_dim, num_outputs), t_eval)

    @property
    def input_dim(self):
        return self.layers[0].weights.shape[1]

    def parameters(self):
        params = {}
        for i, layer in enumerate(self.layers):
            params[f"deep.W{i}"] = layer.weights
            params[f"deep.b{i}"] = layer.bias
        return params

    def mark_updated(self):
        self.version += 1

    def build_inputs(self, ds, part=None, encoded=None):
        """Input matrix for this trunk from a (standardized) dataset."""
        if self.config.architecture == "shared_codec":
            if encoded is None:
                encoded = part.encode(ds)
            return np.concatenate(encoded, axis=1) if encoded else np.zeros((ds.n, 0))
        return np.concatenate(ds.predictors, axis=1)

    def forward(self, inputs, training=False, rng=None):
        return deep_forward(self, inputs, training, rng)

    def backward(self, cache, upstream):
        return deep_backward(self, cache, upstream)


def deep_forward(net, inputs, training=False, rng=None):
    """Returns ``(output n x Q, cache)``. Dropout is only active when ``training``."""
    h = np.asarray(inputs, dtype=np.float64)
    if h.ndim != 2 or h.shape[1] != net.input_dim:
        raise InvalidArgumentError(f"deep input shape {h.shape}, expected (n, {net.input_dim})")
    rate = net.config.dropout_rate if training else 0.0
    if rate > 0 and rng is None:
        raise InvalidArgumentError("a random generator is needed for dropout during training")
    pre, post, masks = [], [h], []
    last = len(net.layers) - 1
    for i, layer in enumerate(net.layers):
        z = h @ layer.weights.T + layer.bias
        h = ACTIVATIONS[layer.activation][0](z)
        pre.append(z)
        mask = None
        if i < last and rate > 0:
            mask = (rng.random(h.shape) >= rate) / (1.0 - rate)
            h = h * mask
        masks.append(mask)
        post.append(h)
    out = h @ net.t_eval if net.config.architecture == "shared_codec" else h
    return out, ForwardCache(net.version, post[0], pre, post, masks)


def deep_backward(net, cache, upstream):
    """Gradients of ``sum(upstream * output)`` for every weight and bias."""
    if cache.version != net.version:
        raise ContractViolation("forward cache is stale: parameters changed since the forward pass")
    g = np.asarray(upstream, dtype=np.float64)
    if net.config.architecture == "shared_codec":
        g = g @ net.t_eval.T
    if g.shape != cache.post[-1].shape:
        raise InvalidArgumentError(f"upstream shape {np.shape(upstream)} does not match the output")
    grads = {}
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if cache.masks[i] is not None:
            g = g * cache.masks[i]
        act_out = cache.post[i + 1] if cache.masks[i] is None else ACTIVATIONS[layer.activation][0](cache.pre[i])
        g = g * ACTIVATIONS[layer.activation][1](cache.pre[i], act_out)
        grads[f"deep.W{i}"] = g.T @ cache.post[i]
        grads[f"deep.b{i}"] = g.sum(axis=0)
        if i > 0:
            g = g @ layer.weights
    return grads


@dataclass(eq=False)
class FunctionalLayer:
    """One layer of a function-on-function MLP.

    ``coefficients[k, m]`` is the U x K coefficient matrix of the weight surface
    linking input neuron m to output neuron k; ``bias[k]`` holds U coefficients of
    the functional bias of output neuron k.
    """

    coefficients: np.ndarray
    bias: np.ndarray
    in_grid: object = field(repr=False)
    s_basis: object = field(repr=False)
    t_basis: object = field(repr=False)
    activation: str = "identity"

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        _check_activation(self.activation)
        m_out, m_in, u, k = self.coefficients.shape
        if (u, k) != (self.t_basis.num_basis, self.s_basis.num_basis):
            raise InvalidArgumentError("coefficient matrices do not match the layer bases")
        if self.bias.shape != (m_out, u):
            raise InvalidArgumentError(f"bias must have shape ({m_out}, {u})")

    @property
    def out_grid(self):
        return self.t_basis.grid


def functional_layer_forward(layer, inputs):
    """Evaluate output neurons on the out-grid from input curves on the in-grid.

    ``inputs`` has shape (n, M_in, R) or (M_in, R); the result has shape
    (n, M_out, Q) or (M_out, Q) accordingly.
    """
    h = np.asarray(inputs, dtype=np.float64)
    single = h.ndim == 2
    if single:
        h = h[None]
    m_out, m_in = layer.coefficients.shape[:2]
    if h.ndim != 3 or h.shape[1] != m_in or h.shape[2] != len(layer.in_grid):
        raise InvalidArgumentError(
            f"input shape {np.shape(inputs)} does not match ({m_in} neurons, {len(layer.in_grid)}-point grid)"
        )
    enc = encode(h, layer.in_grid, layer.s_basis)  # n x M_in x K
    latent = np.einsum("nmk,omuk->nou", enc, layer.coefficients) + layer.bias
    out = ACTIVATIONS[layer.activation][0](latent @ layer.t_basis.eval_matrix)
    return out[0] if single else out
