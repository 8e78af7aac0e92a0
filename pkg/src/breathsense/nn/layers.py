"""Minimal CNN layer zoo: forward/backward with explicit caches.

Data layout is (batch, channels, height, width) row-major. Conv kernels are
3x3, stride 1, padding 1; pooling is 2x2 stride 2 with floor semantics.
Heavy loops live in breathsense.kernels.
"""

import os

import numpy as np

from ..errors import BreathSenseError
from .. import kernels

DEBUG_CHECKS = os.environ.get("BREATHSENSE_DEBUG", "") not in ("", "0")

# layer kind codes used by the weight container
CONV, BATCHNORM, RELU, MAXPOOL, FLATTEN, DENSE, SIGMOID = 1, 2, 3, 4, 5, 6, 7


class ShapeMismatch(BreathSenseError):
    pass


class StaleCache(BreathSenseError):
    pass


class DegenerateBatch(BreathSenseError):
    pass


def _check_finite(arr, where):
    if DEBUG_CHECKS and not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values after {where}")


class Layer:
    kind = None
    params: dict
    grads: dict

    def __init__(self):
        self.params = {}
        self.grads = {}
        self._cache = None

    def forward(self, x, train=False):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError

    def _take_cache(self):
        if self._cache is None:
            raise StaleCache(f"{type(self).__name__}.backward called without a cached forward")
        return self._cache

    def state_items(self):
        """Arrays persisted to the weight container (params + buffers)."""
        return list(self.params.items())

    def trainable_keys(self):
        return list(self.params.keys())

    def astype(self, dtype):
        for k in self.params:
            self.params[k] = self.params[k].astype(dtype)
        return self


class Conv2D(Layer):
    kind = CONV

    def __init__(self, in_channels, out_channels, rng=None, dtype=np.float32):
        super().__init__()
        rng = rng or np.random.default_rng()
        bound = np.sqrt(6.0 / (in_channels * 9))
        self.params["weight"] = rng.uniform(-bound, bound, (out_channels, in_channels, 3, 3)).astype(dtype)
        self.params["bias"] = np.zeros(out_channels, dtype=dtype)

    def forward(self, x, train=False):
        w = self.params["weight"]
        if x.ndim != 4 or x.shape[1] != w.shape[1]:
            raise ShapeMismatch(f"conv input {x.shape} vs weight {w.shape}")
        self._cache = x
        out = kernels.conv2d_forward(x, w) + self.params["bias"][None, :, None, None]
        _check_finite(out, "Conv2D.forward")
        return out

    def backward(self, dy):
        x = self._take_cache()
        self.grads["bias"] = dy.sum(axis=(0, 2, 3))
        self.grads["weight"] = kernels.conv2d_backward_weights(x, dy)
        dx = kernels.conv2d_backward_input(np.ascontiguousarray(dy), self.params["weight"])
        _check_finite(dx, "Conv2D.backward")
        return dx


class BatchNorm2D(Layer):
    kind = BATCHNORM

    def __init__(self, channels, eps=1e-5, momentum=0.1, dtype=np.float32):
        super().__init__()
        self.eps = eps
        self.momentum = momentum
        self.params["weight"] = np.ones(channels, dtype=dtype)
        self.params["bias"] = np.zeros(channels, dtype=dtype)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    def forward(self, x, train=False):
        if x.ndim != 4 or x.shape[1] != self.params["weight"].shape[0]:
            raise ShapeMismatch(f"batchnorm input {x.shape} vs {self.params['weight'].shape[0]} channels")
        if train:
            count = x.shape[0] * x.shape[2] * x.shape[3]
            if count <= 1:
                raise DegenerateBatch("train-mode batchnorm needs more than one element per channel")
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            inv_std = 1.0 / np.sqrt(var + self.eps)
            xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
            m = self.momentum
            self.running_mean = ((1 - m) * self.running_mean + m * mean).astype(self.running_mean.dtype)
            # biased variance, matching the train-mode normalizer, so converged
            # running stats reproduce train-mode outputs in eval mode
            self.running_var = ((1 - m) * self.running_var + m * var).astype(self.running_var.dtype)
            self._cache = (xhat, inv_std, True)
        else:
            inv_std = 1.0 / np.sqrt(self.running_var + self.eps)
            xhat = (x - self.running_mean[None, :, None, None]) * inv_std[None, :, None, None]
            self._cache = (xhat, inv_std, False)
        out = self.params["weight"][None, :, None, None] * xhat + self.params["bias"][None, :, None, None]
        _check_finite(out, "BatchNorm2D.forward")
        return out

    def backward(self, dy):
        xhat, inv_std, was_train = self._take_cache()
        self.grads["weight"] = (dy * xhat).sum(axis=(0, 2, 3))
        self.grads["bias"] = dy.sum(axis=(0, 2, 3))
        gamma = self.params["weight"][None, :, None, None]
        if not was_train:
            return dy * gamma * inv_std[None, :, None, None]
        m = dy.shape[0] * dy.shape[2] * dy.shape[3]
        dxhat = dy * gamma
        sum_dxhat = dxhat.sum(axis=(0, 2, 3), keepdims=True)
        sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2, 3), keepdims=True)
        dx = inv_std[None, :, None, None] / m * (m * dxhat - sum_dxhat - xhat * sum_dxhat_xhat)
        _check_finite(dx, "BatchNorm2D.backward")
        return dx

    def state_items(self):
        return list(self.params.items()) + [
            ("running_mean", self.running_mean),
            ("running_var", self.running_var),
        ]

    def astype(self, dtype):
        super().astype(dtype)
        self.running_mean = self.running_mean.astype(dtype)
        self.running_var = self.running_var.astype(dtype)
        return self


class MaxPool2D(Layer):
    kind = MAXPOOL

    def forward(self, x, train=False):
        if x.shape[2] < 2 or x.shape[3] < 2:
            raise ShapeMismatch(f"maxpool needs H,W >= 2, got {x.shape}")
        out, arg = kernels.maxpool2d_forward(x)
        self._cache = (arg, x.shape[2], x.shape[3])
        return out

    def backward(self, dy):
        arg, h, w = self._take_cache()
        return kernels.maxpool2d_backward(np.ascontiguousarray(dy), arg, h, w)


class Flatten(Layer):
    kind = FLATTEN

    def forward(self, x, train=False):
        self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._take_cache())


class Dense(Layer):
    kind = DENSE

    def __init__(self, in_features, out_features, rng=None, dtype=np.float32):
        super().__init__()
        rng = rng or np.random.default_rng()
        bound = np.sqrt(6.0 / in_features)
        self.params["weight"] = rng.uniform(-bound, bound, (out_features, in_features)).astype(dtype)
        self.params["bias"] = np.zeros(out_features, dtype=dtype)

    def forward(self, x, train=False):
        w = self.params["weight"]
        if x.ndim != 2 or x.shape[1] != w.shape[1]:
            raise ShapeMismatch(f"dense input {x.shape} vs weight {w.shape}")
        self._cache = x
        out = x @ w.T + self.params["bias"]
        _check_finite(out, "Dense.forward")
        return out

    def backward(self, dy):
        x = self._take_cache()
        self.grads["weight"] = dy.T @ x
        self.grads["bias"] = dy.sum(axis=0)
        return dy @ self.params["weight"]


class ReLU(Layer):
    kind = RELU

    def forward(self, x, train=False):
        self._cache = x > 0
        return np.where(self._cache, x, 0.0).astype(x.dtype)

    def backward(self, dy):
        return dy * self._take_cache()


class Sigmoid(Layer):
    kind = SIGMOID

    def forward(self, x, train=False):
        out = np.empty_like(x)
        pos = x >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ez = np.exp(x[~pos])
        out[~pos] = ez / (1.0 + ez)
        self._cache = out
        return out

    def backward(self, dy):
        p = self._take_cache()
        return dy * p * (1.0 - p)


class Network:
    """Sequential layer graph with an optional fused sigmoid+BCE backward."""

    def __init__(self, layers):
        self.layers = list(layers)
        self._forward_done = False

    def forward(self, x, train=False):
        for layer in self.layers:
            x = layer.forward(x, train=train)
        self._forward_done = True
        return x

    def backward(self, dout, fused_sigmoid=False):
        """Reverse-mode sweep. With fused_sigmoid, dout is the gradient w.r.t.
        the logits of a trailing Sigmoid layer and that layer is skipped."""
        if not self._forward_done:
            raise StaleCache("Network.backward called before forward")
        layers = self.layers
        if fused_sigmoid:
            if not isinstance(layers[-1], Sigmoid):
                raise ShapeMismatch("fused backward requires a trailing Sigmoid layer")
            layers = layers[:-1]
        grad = dout
        for layer in reversed(layers):
            grad = layer.backward(grad)
        return grad

    def trainable_params(self):
        out = []
        for i, layer in enumerate(self.layers):
            for key in layer.trainable_keys():
                out.append((f"L{i:02d}.{key}", layer, key))
        return out

    def state_entries(self):
        entries = [("__arch__", np.array([l.kind for l in self.layers], dtype=np.float32))]
        for i, layer in enumerate(self.layers):
            for key, arr in layer.state_items():
                entries.append((f"L{i:02d}.{key}", arr))
        return entries

    def astype(self, dtype):
        for layer in self.layers:
            layer.astype(dtype)
        return self


def network_from_arch(codes, shapes):
    """Rebuild a Network from layer-kind codes plus per-layer param shapes."""
    layers = []
    for i, code in enumerate(codes):
        code = int(code)
        if code == CONV:
            w_shape = shapes[f"L{i:02d}.weight"]
            layers.append(Conv2D(w_shape[1], w_shape[0]))
        elif code == BATCHNORM:
            layers.append(BatchNorm2D(shapes[f"L{i:02d}.weight"][0]))
        elif code == DENSE:
            w_shape = shapes[f"L{i:02d}.weight"]
            layers.append(Dense(w_shape[1], w_shape[0]))
        elif code == RELU:
            layers.append(ReLU())
        elif code == MAXPOOL:
            layers.append(MaxPool2D())
        elif code == FLATTEN:
            layers.append(Flatten())
        elif code == SIGMOID:
            layers.append(Sigmoid())
        else:
            raise ShapeMismatch(f"unknown layer kind code {code}")
    return Network(layers)
