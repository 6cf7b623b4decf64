"""Trainable network instances built from a NetworkSpec.

A `Network` owns one parameter block per learnable layer and runs the
forward/backward passes by delegating to `ops`. The forward pass in
training mode caches each layer's input (and the batch-norm internals)
so backward can run without recomputation; inference mode mutates nothing.

Weight init is Glorot-uniform from a single seeded generator walked in
layer order, so a seed pins every parameter bit-for-bit. Biases start at
zero, batch-norm at scale 1 / offset 0 / running stats (0, 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .arch import (
    AvgPool,
    BatchNorm,
    Conv2D,
    FullyConnected,
    ImageInput,
    NetworkSpec,
    RegressionOutput,
    activation_shapes,
    format_layer_table,
    parse_layer_table,
)
from .errors import ShapeMismatchError, StaleCacheError
from .tensor import Tensor4

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


@dataclass
class ConvParams:
    weights: Tensor4          # (kh, kw, in_c, filters)
    bias: np.ndarray          # (filters,)


@dataclass
class BatchNormParams:
    gamma: np.ndarray         # (channels,)
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray


@dataclass
class FCParams:
    weights: Tensor4          # (1, flat_in, 1, units)
    bias: np.ndarray          # (units,)


@dataclass
class ForwardCache:
    """Everything backward() needs, pinned to one network and one pass."""

    net: "Network"
    training: bool
    inputs: list              # per-layer input Tensor4 (None for the input layer)
    bn: dict                  # layer index -> batchnorm cache
    output: Tensor4


def _glorot(rng: np.random.Generator, shape: tuple[int, ...],
            fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Network:
    """A NetworkSpec plus its parameters and input-centering statistics."""

    def __init__(self, spec: NetworkSpec, seed: int = 0):
        self.spec = spec
        self.shapes = activation_shapes(spec)
        inp = spec.input
        self.input_mean = np.zeros((inp.height, inp.width, inp.channels, 1))
        self.params: list = []
        rng = np.random.default_rng(seed)
        prev = (inp.height, inp.width, inp.channels)
        for i, layer in enumerate(spec.layers):
            if isinstance(layer, Conv2D):
                kh, kw = layer.kernel
                in_c = prev[2]
                fan_in = kh * kw * in_c
                fan_out = kh * kw * layer.filters
                w = _glorot(rng, (kh, kw, in_c, layer.filters), fan_in, fan_out)
                self.params.append(ConvParams(Tensor4(w), np.zeros(layer.filters)))
            elif isinstance(layer, BatchNorm):
                c = prev[2]
                self.params.append(BatchNormParams(
                    np.ones(c), np.zeros(c), np.zeros(c), np.ones(c)))
            elif isinstance(layer, FullyConnected):
                flat_in = prev[0] * prev[1] * prev[2]
                w = _glorot(rng, (1, flat_in, 1, layer.units), flat_in, layer.units)
                self.params.append(FCParams(Tensor4(w), np.zeros(layer.units)))
            else:
                self.params.append(None)
            prev = self.shapes[i]

    # -- parameter access ---------------------------------------------------

    def trainable_arrays(self) -> list[np.ndarray]:
        """Learnable arrays in layer order; mutating them updates the net."""
        out: list[np.ndarray] = []
        for p in self.params:
            if isinstance(p, (ConvParams, FCParams)):
                out += [p.weights.data, p.bias]
            elif isinstance(p, BatchNormParams):
                out += [p.gamma, p.beta]
        return out

    def state_arrays(self) -> list[np.ndarray]:
        """Trainable arrays plus batch-norm running stats (for snapshots)."""
        out: list[np.ndarray] = []
        for p in self.params:
            if isinstance(p, (ConvParams, FCParams)):
                out += [p.weights.data, p.bias]
            elif isinstance(p, BatchNormParams):
                out += [p.gamma, p.beta, p.running_mean, p.running_var]
        return out

    def snapshot_state(self) -> list[np.ndarray]:
        return [a.copy() for a in self.state_arrays()]

    def restore_state(self, snapshot: list[np.ndarray]) -> None:
        for a, s in zip(self.state_arrays(), snapshot):
            a[...] = s

    def flat_weights(self) -> np.ndarray:
        """Every learnable parameter, concatenated in layer order."""
        return np.concatenate([a.ravel() for a in self.trainable_arrays()])

    def set_flat_weights(self, vec: np.ndarray) -> None:
        self._set_flat(self.trainable_arrays(), vec)

    def flat_state(self) -> np.ndarray:
        """Learnable parameters plus batch-norm running stats, concatenated."""
        return np.concatenate([a.ravel() for a in self.state_arrays()])

    def set_flat_state(self, vec: np.ndarray) -> None:
        self._set_flat(self.state_arrays(), vec)

    @staticmethod
    def _set_flat(arrays: list[np.ndarray], vec: np.ndarray) -> None:
        total = sum(a.size for a in arrays)
        vec = np.asarray(vec, dtype=np.float64).ravel()
        if vec.size != total:
            raise ValueError(f"weight vector has {vec.size} entries, net has {total}")
        pos = 0
        for a in arrays:
            a[...] = vec[pos:pos + a.size].reshape(a.shape)
            pos += a.size

    def clone(self) -> "Network":
        other = Network(self.spec, seed=0)
        other.input_mean = self.input_mean.copy()
        other.restore_state(self.snapshot_state())
        return other

    def set_input_mean(self, mean: np.ndarray) -> None:
        inp = self.spec.input
        mean = np.asarray(mean, dtype=np.float64).reshape(
            inp.height, inp.width, inp.channels, 1)
        self.input_mean = mean

    # -- passes --------------------------------------------------------------

    def forward(self, batch: Tensor4, training: bool) -> tuple[Tensor4, ForwardCache]:
        """Run the stack; returns (output tensor, cache for backward).

        Training mode commits batch-norm running-stat updates; inference
        mode reads running stats and leaves the network untouched.
        """
        inp = self.spec.input
        if batch.shape[:3] != (inp.height, inp.width, inp.channels):
            raise ShapeMismatchError(
                0, f"input is {batch.shape[:3]}, expected "
                   f"{(inp.height, inp.width, inp.channels)}")
        x = batch
        inputs: list = []
        bn_caches: dict = {}
        for i, layer in enumerate(self.spec.layers):
            inputs.append(x)
            p = self.params[i]
            if isinstance(layer, ImageInput):
                if layer.normalization == "zerocenter":
                    x = ops.zerocenter_forward(x, self.input_mean)
            elif isinstance(layer, Conv2D):
                x = ops.conv2d_same_forward(x, p.weights, p.bias, layer.stride)
            elif isinstance(layer, BatchNorm):
                x, cache, new_mean, new_var = ops.batchnorm_forward(
                    x, p.gamma, p.beta, p.running_mean, p.running_var,
                    training, BN_MOMENTUM, BN_EPS)
                if training:
                    p.running_mean, p.running_var = new_mean, new_var
                    bn_caches[i] = cache
            elif isinstance(layer, AvgPool):
                x = ops.avgpool_forward(x, layer.pool, layer.stride)
            elif isinstance(layer, FullyConnected):
                x = ops.fully_connected_forward(x, p.weights, p.bias)
            elif isinstance(layer, RegressionOutput):
                pass
            else:  # ReLU
                x = ops.relu_forward(x)
        return x, ForwardCache(self, training, inputs, bn_caches, x)

    def backward(self, cache: ForwardCache, loss_grad: np.ndarray) -> dict:
        """Backprop a loss gradient; returns {(layer, name): grad array}.

        loss_grad is d(loss)/d(predictions) for the (batch, outputs) matrix
        returned by `predictions`, in the same layout (or flattened).
        """
        if cache.net is not self:
            raise StaleCacheError("cache was produced by a different network")
        if not cache.training:
            raise StaleCacheError("backward needs a training-mode cache")
        units = self.shapes[-1][2]
        n = cache.output.batch
        g_mat = np.asarray(loss_grad, dtype=np.float64).reshape(n, units)
        g = Tensor4(g_mat.T.reshape(1, 1, units, n))
        grads: dict = {}
        for i in range(len(self.spec.layers) - 1, -1, -1):
            layer = self.spec.layers[i]
            p = self.params[i]
            x_in = cache.inputs[i]
            if isinstance(layer, RegressionOutput) or isinstance(layer, ImageInput):
                continue
            if isinstance(layer, FullyConnected):
                g, gw, gb = ops.fully_connected_backward(x_in, p.weights, g)
                grads[(i, "weights")], grads[(i, "bias")] = gw, gb
            elif isinstance(layer, AvgPool):
                g = ops.avgpool_backward(x_in.shape, layer.pool, layer.stride, g)
            elif isinstance(layer, BatchNorm):
                g, gg, gb = ops.batchnorm_backward(cache.bn[i], g)
                grads[(i, "gamma")], grads[(i, "beta")] = gg, gb
            elif isinstance(layer, Conv2D):
                g, gw, gb = ops.conv2d_same_backward(x_in, p.weights, layer.stride, g)
                grads[(i, "weights")], grads[(i, "bias")] = gw, gb
            else:  # ReLU
                g = ops.relu_backward(x_in, g)
        return grads

    def grad_list(self, grads: dict) -> list[np.ndarray]:
        """Gradient arrays ordered to match trainable_arrays()."""
        out: list[np.ndarray] = []
        for i, p in enumerate(self.params):
            if isinstance(p, (ConvParams, FCParams)):
                out += [grads[(i, "weights")], grads[(i, "bias")]]
            elif isinstance(p, BatchNormParams):
                out += [grads[(i, "gamma")], grads[(i, "beta")]]
        return out

    def predict(self, batch: Tensor4) -> np.ndarray:
        """Inference-mode forward, returned as a (batch, outputs) matrix."""
        out, _ = self.forward(batch, training=False)
        return predictions(out)


def predictions(output: Tensor4) -> np.ndarray:
    """(1, 1, units, N) output tensor -> (N, units) matrix."""
    units, n = output.shape[2], output.shape[3]
    return output.data.reshape(units, n).T


# --- persistence ----------------------------------------------------------


def save_network(net: Network, path) -> None:
    """Write spec (as its layer table) + all state to one .npz file."""
    arrays = {f"arr_{k:04d}": a for k, a in enumerate(net.state_arrays())}
    np.savez(
        path,
        layer_table=np.array(format_layer_table(net.spec)),
        input_mean=net.input_mean,
        **arrays,
    )


def load_network(path) -> Network:
    with np.load(path, allow_pickle=False) as z:
        spec = parse_layer_table(str(z["layer_table"]))
        net = Network(spec, seed=0)
        net.set_input_mean(z["input_mean"])
        keys = sorted(k for k in z.files if k.startswith("arr_"))
        net.restore_state([z[k] for k in keys])
    return net
