"""Minimal feed-forward network engine with manual backpropagation.

Dense and small 2D convolutions, ReLU, batch normalization and softmax,
trained with momentum SGD. Everything is float64 and deterministic given a
seed; any NaN/Inf produced by an engine operation raises NumericError.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layers, priors, seeding
from .errors import ConfigError, NumericError, StaleCacheError

DTYPE = np.float64


class Network:
    """One feed-forward classifier: layer specs plus parameter blocks.

    ``params[i]`` holds the trainable tensors of layer ``i`` (possibly
    empty); ``state[i]`` holds non-trained state (batch-norm running
    statistics). ``version`` increments on every parameter update and
    guards backward passes against stale caches.
    """

    def __init__(self, specs, input_shape, params, state):
        self.specs = list(specs)
        self.input_shape = tuple(input_shape)
        self.shapes = layers.infer_shapes(self.specs, self.input_shape)
        self.params = params
        self.state = state
        self.version = 0

    @property
    def output_shape(self):
        return self.shapes[-1]

    def copy(self) -> "Network":
        net = Network(
            self.specs,
            self.input_shape,
            [{k: v.copy() for k, v in p.items()} for p in self.params],
            [{k: v.copy() for k, v in s.items()} for s in self.state],
        )
        net.version = self.version
        return net


@dataclass
class ForwardCache:
    """Per-layer values saved by forward for the matching backward."""

    version: int
    train_mode: bool
    batch_size: int
    layer_caches: list = field(default_factory=list)


def init_network(specs, input_shape, seed: int) -> Network:
    """Build a network with every weight drawn from its group's prior.

    Weights and biases are sampled from Normal(mu, var) of the group prior;
    batch-norm scale/shift start exactly at 1 and 0 (the prior means).
    Draw order is layer by layer, parameter name order as in
    ``layers.PARAM_NAMES``, so identical (specs, input_shape, seed) give
    bit-identical networks.
    """
    prior_map = priors.assign_priors(specs, tuple(input_shape))
    rng = np.random.default_rng(seeding.normalize_seed(seed))
    shapes = layers.infer_shapes(specs, tuple(input_shape))
    params, state = [], []
    for i, spec in enumerate(specs):
        blocks = {}
        for name, shape in layers.param_shapes(spec, shapes[i]).items():
            if isinstance(spec, layers.BatchNorm):
                value = 1.0 if name == "scale" else 0.0
                blocks[name] = np.full(shape, value, dtype=DTYPE)
            else:
                p = prior_map[priors.group_id(i, name)]
                blocks[name] = rng.normal(p.mu, np.sqrt(p.var), size=shape).astype(DTYPE)
        params.append(blocks)
        if isinstance(spec, layers.BatchNorm):
            state.append({
                "running_mean": np.zeros(spec.channels, dtype=DTYPE),
                "running_var": np.ones(spec.channels, dtype=DTYPE),
            })
        else:
            state.append({})
    return Network(specs, input_shape, params, state)


def _bn_axes(x: np.ndarray) -> tuple[int, ...]:
    # Channel axis is 1 for both (N, F) and (N, C, H, W) inputs.
    return (0,) if x.ndim == 2 else (0, 2, 3)


def _bn_reshape(v: np.ndarray, ndim: int) -> np.ndarray:
    return v.reshape(1, -1) if ndim == 2 else v.reshape(1, -1, 1, 1)


def forward(net: Network, batch: np.ndarray, train_mode: bool = False):
    """Run the network on a batch; returns (logits, cache).

    ``train_mode`` switches batch norm to batch statistics (and updates the
    running ones). The cache is only valid until the next parameter update.
    """
    x = np.asarray(batch, dtype=DTYPE)
    if x.shape[1:] != net.input_shape:
        if x.ndim == 2 and x.shape[1] == int(np.prod(net.input_shape)):
            x = x.reshape((x.shape[0],) + net.input_shape)
        else:
            raise ConfigError(
                f"batch shape {x.shape[1:]} does not match network input {net.input_shape}"
            )
    cache = ForwardCache(version=net.version, train_mode=train_mode, batch_size=x.shape[0])
    for i, spec in enumerate(net.specs):
        x, layer_cache = _forward_layer(spec, net.params[i], net.state[i], x, train_mode)
        cache.layer_caches.append(layer_cache)
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite values in network output")
    return x, cache


def _forward_layer(spec, params, state, x, train_mode):
    if isinstance(spec, layers.Dense):
        orig_shape = x.shape
        x2 = x.reshape(x.shape[0], -1)
        out = x2 @ params["W"]
        if spec.bias:
            out = out + params["b"]
        return out, (orig_shape, x2)

    if isinstance(spec, layers.Conv2D):
        p, s = spec.padding, spec.stride
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        windows = np.lib.stride_tricks.sliding_window_view(
            xp, (spec.kernel_h, spec.kernel_w), axis=(2, 3)
        )[:, :, ::s, ::s]
        out = np.einsum("nchwij,ocij->nohw", windows, params["W"], optimize=True)
        if spec.bias:
            out = out + params["b"][None, :, None, None]
        return out, (xp, x.shape)

    if isinstance(spec, layers.ReLU):
        mask = x > 0
        return x * mask, mask

    if isinstance(spec, layers.BatchNorm):
        axes = _bn_axes(x)
        if train_mode:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)  # population variance
            m = spec.momentum
            state["running_mean"] = m * state["running_mean"] + (1.0 - m) * mean
            state["running_var"] = m * state["running_var"] + (1.0 - m) * var
        else:
            mean, var = state["running_mean"], state["running_var"]
        inv_std = 1.0 / np.sqrt(var + spec.epsilon)
        x_hat = (x - _bn_reshape(mean, x.ndim)) * _bn_reshape(inv_std, x.ndim)
        out = _bn_reshape(params["scale"], x.ndim) * x_hat + _bn_reshape(params["shift"], x.ndim)
        return out, (x_hat, inv_std)

    if isinstance(spec, layers.Softmax):
        y = softmax(x)
        return y, y

    raise ConfigError(f"unknown layer spec {spec!r}")


def backward(net: Network, cache: ForwardCache, loss_grad_on_logits: np.ndarray):
    """Gradients of the scalar loss w.r.t. every parameter block.

    Requires the cache from a forward pass on the current parameters;
    raises StaleCacheError otherwise. Softmax caches store the output
    probabilities, so the last layer cache doubles as its own input.
    """
    if cache.version != net.version:
        raise StaleCacheError(
            f"cache built at version {cache.version}, network is at {net.version}"
        )
    g = np.asarray(loss_grad_on_logits, dtype=DTYPE)
    grads = [dict() for _ in net.specs]
    for i in range(len(net.specs) - 1, -1, -1):
        g = _backward_layer(
            net.specs[i], net.params[i], cache.layer_caches[i], g, grads[i], cache.train_mode
        )
    return grads


def _backward_layer(spec, params, layer_cache, g, out_grads, train_mode):
    if isinstance(spec, layers.Dense):
        orig_shape, x2 = layer_cache
        out_grads["W"] = x2.T @ g
        if spec.bias:
            out_grads["b"] = g.sum(axis=0)
        return (g @ params["W"].T).reshape(orig_shape)

    if isinstance(spec, layers.Conv2D):
        xp, in_shape = layer_cache
        s = spec.stride
        windows = np.lib.stride_tricks.sliding_window_view(
            xp, (spec.kernel_h, spec.kernel_w), axis=(2, 3)
        )[:, :, ::s, ::s]
        out_grads["W"] = np.einsum("nchwij,nohw->ocij", windows, g, optimize=True)
        if spec.bias:
            out_grads["b"] = g.sum(axis=(0, 2, 3))
        h_out, w_out = g.shape[2], g.shape[3]
        dxp = np.zeros_like(xp)
        for ki in range(spec.kernel_h):
            for kj in range(spec.kernel_w):
                dxp[:, :, ki : ki + s * h_out : s, kj : kj + s * w_out : s] += np.einsum(
                    "nohw,oc->nchw", g, params["W"][:, :, ki, kj], optimize=True
                )
        p = spec.padding
        if p:
            dxp = dxp[:, :, p:-p, p:-p]
        return dxp.reshape(in_shape)

    if isinstance(spec, layers.ReLU):
        return g * layer_cache

    if isinstance(spec, layers.BatchNorm):
        x_hat, inv_std = layer_cache
        axes = _bn_axes(g)
        out_grads["scale"] = (g * x_hat).sum(axis=axes)
        out_grads["shift"] = g.sum(axis=axes)
        dxhat = g * _bn_reshape(params["scale"], g.ndim)
        istd = _bn_reshape(inv_std, g.ndim)
        if not train_mode:
            # Running statistics are constants in eval mode.
            return dxhat * istd
        m = g.size // g.shape[1] if g.ndim == 4 else g.shape[0]
        mean_dxhat = _bn_reshape(dxhat.sum(axis=axes) / m, g.ndim)
        mean_dxhat_xhat = _bn_reshape((dxhat * x_hat).sum(axis=axes) / m, g.ndim)
        return istd * (dxhat - mean_dxhat - x_hat * mean_dxhat_xhat)

    if isinstance(spec, layers.Softmax):
        y = layer_cache
        return y * (g - (g * y).sum(axis=1, keepdims=True))

    raise ConfigError(f"unknown layer spec {spec!r}")


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, shifted by the row max for stability."""
    z = np.asarray(logits, dtype=DTYPE)
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _check_labels(logits, labels):
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.shape[0] != logits.shape[0]:
        raise ConfigError(f"labels shape {labels.shape} does not match logits {logits.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise ConfigError(
            f"labels must lie in [0, {logits.shape[1]}), got range "
            f"[{labels.min()}, {labels.max()}]"
        )
    return labels.astype(np.int64)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean negative log softmax probability of the true class."""
    logits = np.asarray(logits, dtype=DTYPE)
    labels = _check_labels(logits, labels)
    m = logits.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(logits - m).sum(axis=1))
    loss = float(np.mean(lse - logits[np.arange(len(labels)), labels]))
    if not np.isfinite(loss):
        raise NumericError("cross entropy is not finite")
    return loss


def cross_entropy_grad(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Gradient of ``cross_entropy`` w.r.t. the logits: (softmax - onehot)/N."""
    logits = np.asarray(logits, dtype=DTYPE)
    labels = _check_labels(logits, labels)
    g = softmax(logits)
    g[np.arange(len(labels)), labels] -= 1.0
    return g / len(labels)


class SGD:
    """Momentum SGD: v <- momentum*v + g; theta <- theta - lr*v.

    Velocities persist across steps, one optimizer per network.
    """

    def __init__(self, lr: float, momentum: float = 0.0):
        if lr < 0:
            raise ConfigError(f"learning rate must be >= 0, got {lr}")
        if not 0.0 <= momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {momentum}")
        self.lr = lr
        self.momentum = momentum
        self._velocities = None

    def step(self, net: Network, grads) -> Network:
        if len(grads) != len(net.params):
            raise ConfigError("gradient blocks do not match network layers")
        if self._velocities is None:
            self._velocities = [
                {k: np.zeros_like(v) for k, v in p.items()} for p in net.params
            ]
        for p, g, v in zip(net.params, grads, self._velocities):
            if set(g) != set(p):
                raise ConfigError(f"gradient keys {sorted(g)} do not match params {sorted(p)}")
            for name in p:
                if g[name].shape != p[name].shape:
                    raise ConfigError(
                        f"gradient shape {g[name].shape} does not match "
                        f"parameter shape {p[name].shape} for {name!r}"
                    )
                v[name] = self.momentum * v[name] + g[name]
                p[name] -= self.lr * v[name]
                if not np.all(np.isfinite(p[name])):
                    raise NumericError(f"non-finite parameter values in {name!r} after update")
        net.version += 1
        return net


def accuracy(probs: np.ndarray, labels: np.ndarray) -> float:
    """Top-1 accuracy of a probability (or logit) matrix."""
    return float(np.mean(np.argmax(probs, axis=1) == np.asarray(labels)))
