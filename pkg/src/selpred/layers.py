"""Stateful network layers: dense, batch normalization, dropout, softmax.

Layers carry their parameters as ``Tensor`` leaves and expose a
``parameters()`` list in declaration order; the order is relied upon by the
optimizer and by checkpoint serialization.
"""

from __future__ import annotations

import numpy as np

from .autograd import DomainError, ShapeError, Tensor, relu, sigmoid, sqrt

__all__ = [
    "ConfigurationError",
    "ContractError",
    "DenseLayer",
    "BatchNormLayer",
    "DropoutLayer",
    "softmax",
    "relu",
    "sigmoid",
    "TRAIN",
    "EVAL",
    "FORCED_ACTIVE",
]

TRAIN = "train"
EVAL = "eval"
FORCED_ACTIVE = "forced_active"


class ConfigurationError(ValueError):
    """Invalid layer or model configuration."""


class ContractError(ValueError):
    """A call violates a layer's usage contract."""


class DenseLayer:
    """Affine map x @ W + b with He- or Glorot-uniform initialization.

    Use ``init="he"`` when a ReLU follows, ``init="glorot"`` otherwise.
    """

    def __init__(self, in_dim, out_dim, rng, init="he"):
        if in_dim < 1 or out_dim < 1:
            raise ConfigurationError(
                f"dense layer extents must be positive, got {in_dim}x{out_dim}")
        if init == "he":
            limit = np.sqrt(6.0 / in_dim)
        elif init == "glorot":
            limit = np.sqrt(6.0 / (in_dim + out_dim))
        else:
            raise ConfigurationError(f"unknown init {init!r}")
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weights = Tensor(rng.uniform(-limit, limit, (in_dim, out_dim)),
                              requires_grad=True)
        self.bias = Tensor(np.zeros(out_dim), requires_grad=True)

    def __call__(self, x):
        if x.data.ndim != 2 or x.data.shape[1] != self.in_dim:
            raise ShapeError(
                f"dense layer expects (batch, {self.in_dim}), got {x.data.shape}")
        return x @ self.weights + self.bias

    def parameters(self):
        return [self.weights, self.bias]


class BatchNormLayer:
    """Per-feature batch normalization with running statistics.

    Train mode normalizes by batch mean/variance (biased) and updates the
    running statistics with momentum; eval mode uses only the running
    statistics and is stateless.
    """

    def __init__(self, num_features, momentum=0.9, eps=1e-5):
        if not 0.0 < momentum < 1.0:
            raise ConfigurationError(f"momentum must be in (0,1), got {momentum}")
        if eps <= 0.0:
            raise ConfigurationError(f"eps must be positive, got {eps}")
        self.num_features = num_features
        self.momentum = momentum
        self.eps = eps
        self.scale = Tensor(np.ones(num_features), requires_grad=True)
        self.shift = Tensor(np.zeros(num_features), requires_grad=True)
        self.running_mean = np.zeros(num_features)
        self.running_var = np.ones(num_features)

    def __call__(self, x, mode):
        if x.data.shape[1] != self.num_features:
            raise ShapeError(
                f"batchnorm expects {self.num_features} features, got {x.data.shape}")
        if mode == TRAIN:
            m = x.data.shape[0]
            if m < 2:
                raise ContractError("train-mode batchnorm requires batch >= 2")
            mean = x.mean(axis=0)
            centered = x - mean
            var = (centered * centered).mean(axis=0)
            y = centered / sqrt(var + self.eps) * self.scale + self.shift
            self.running_mean = (self.momentum * self.running_mean
                                 + (1.0 - self.momentum) * mean.data)
            self.running_var = (self.momentum * self.running_var
                                + (1.0 - self.momentum) * var.data)
            return y
        inv = 1.0 / np.sqrt(self.running_var + self.eps)
        return (x - Tensor(self.running_mean)) * Tensor(inv) * self.scale + self.shift

    def parameters(self):
        return [self.scale, self.shift]

    def running_stats(self):
        return [self.running_mean, self.running_var]


class DropoutLayer:
    """Inverted dropout: survivors scaled by 1/(1-p) so eval is exact identity."""

    def __init__(self, rate):
        if not 0.0 <= rate < 1.0:
            raise ConfigurationError(f"dropout rate must be in [0,1), got {rate}")
        self.rate = rate

    def __call__(self, x, mode, rng=None):
        if mode not in (TRAIN, FORCED_ACTIVE) or self.rate == 0.0:
            return x
        if rng is None:
            raise ContractError("active dropout requires an rng")
        mask = (rng.random(x.data.shape) >= self.rate) / (1.0 - self.rate)
        return x * Tensor(mask)

    def parameters(self):
        return []


def softmax(logits):
    """Row softmax with max-subtraction stabilization; rows sum to 1."""
    if logits.data.ndim != 2 or logits.data.shape[1] < 2:
        raise ShapeError(
            f"softmax expects (batch, classes>=2), got {logits.data.shape}")
    if not np.all(np.isfinite(logits.data)):
        raise DomainError("softmax requires finite logits")
    shifted = logits - Tensor(logits.data.max(axis=1, keepdims=True))
    from .autograd import exp
    e = exp(shifted)
    return e / e.sum(axis=1, keepdims=True)
