"""Dense layers with explicit forward/backward passes, float64 throughout.

Layers cache activations only on train-mode forwards; eval-mode forwards
are pure (and therefore safe to run concurrently on a frozen model).
backward() consumes the cache, so calling it twice, or after an eval
forward, raises CacheError.
"""

from __future__ import annotations

import numpy as np

from ..errors import BatchTooSmall, CacheError

F64 = np.float64


class ParamTensor:
    """Named trainable array with a same-shaped gradient accumulator."""

    __slots__ = ("name", "values", "grad")

    def __init__(self, name: str, values: np.ndarray):
        self.name = name
        self.values = np.asarray(values, dtype=F64)
        self.grad = np.zeros_like(self.values)

    def zero_grad(self) -> None:
        self.grad.fill(0.0)

    def __repr__(self) -> str:
        return f"ParamTensor({self.name!r}, shape={self.values.shape})"


class Layer:
    def parameters(self) -> list[ParamTensor]:
        return []

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        return []

    def forward(self, x: np.ndarray, train: bool, rng=None) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _take_cache(self):
        cache = getattr(self, "_cache", None)
        if cache is None:
            raise CacheError(f"{type(self).__name__}.backward without train-mode forward")
        self._cache = None
        return cache


class Linear(Layer):
    """y = x @ W + b with Kaiming-uniform weight init and zero biases.

    Weights are drawn from U(-sqrt(6/fan_in), +sqrt(6/fan_in)) (ReLU gain).
    """

    def __init__(self, in_dim: int, out_dim: int, name: str, rng: np.random.Generator):
        bound = np.sqrt(6.0 / in_dim)
        self.weight = ParamTensor(f"{name}.weight", rng.uniform(-bound, bound, (in_dim, out_dim)))
        self.bias = ParamTensor(f"{name}.bias", np.zeros(out_dim))
        self._cache = None

    def parameters(self):
        return [self.weight, self.bias]

    def forward(self, x, train, rng=None):
        self._cache = x if train else None
        return x @ self.weight.values + self.bias.values

    def backward(self, grad_out):
        x = self._take_cache()
        self.weight.grad += x.T @ grad_out
        self.bias.grad += grad_out.sum(axis=0)
        return grad_out @ self.weight.values.T


class ReLU(Layer):
    def __init__(self):
        self._cache = None

    def forward(self, x, train, rng=None):
        if train:
            self._cache = x > 0
        return np.maximum(x, 0.0)

    def backward(self, grad_out):
        mask = self._take_cache()
        return grad_out * mask


class Dropout(Layer):
    """Inverted dropout: train-mode activations scale by 1/(1-p)."""

    def __init__(self, p: float):
        if not 0.0 <= p < 1.0:
            raise ValueError("dropout p must be in [0, 1)")
        self.p = p
        self._cache = None
        self.last_mask: np.ndarray | None = None

    def forward(self, x, train, rng=None):
        if not train or self.p == 0.0:
            if train:
                self._cache = np.ones_like(x, dtype=bool)
                self.last_mask = self._cache
            return x
        if rng is None:
            raise ValueError("train-mode dropout needs an rng")
        mask = rng.random(x.shape) >= self.p
        self._cache = mask
        self.last_mask = mask
        return x * mask / (1.0 - self.p)

    def backward(self, grad_out):
        mask = self._take_cache()
        if self.p == 0.0:
            return grad_out
        return grad_out * mask / (1.0 - self.p)


class BatchNorm1d(Layer):
    """Per-feature batch normalization with affine parameters.

    Train mode normalizes by biased batch statistics and updates running
    statistics (momentum 0.1, unbiased variance, as mainstream frameworks
    do); eval mode uses the running statistics and never mutates state.
    """

    def __init__(self, dim: int, name: str, eps: float = 1e-5, momentum: float = 0.1):
        self.eps = eps
        self.momentum = momentum
        self.gamma = ParamTensor(f"{name}.gamma", np.ones(dim))
        self.beta = ParamTensor(f"{name}.beta", np.zeros(dim))
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)
        self._name = name
        self._cache = None

    def parameters(self):
        return [self.gamma, self.beta]

    def buffers(self):
        return [
            (f"{self._name}.running_mean", self.running_mean),
            (f"{self._name}.running_var", self.running_var),
        ]

    def forward(self, x, train, rng=None):
        if not train:
            inv_std = 1.0 / np.sqrt(self.running_var + self.eps)
            return self.gamma.values * (x - self.running_mean) * inv_std + self.beta.values
        n = x.shape[0]
        if n < 2:
            raise BatchTooSmall("batch normalization needs a batch of >= 2 in train mode")
        mean = x.mean(axis=0)
        var = x.var(axis=0)
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        m = self.momentum
        self.running_mean *= 1.0 - m
        self.running_mean += m * mean
        self.running_var *= 1.0 - m
        self.running_var += m * var * n / (n - 1)
        self._cache = (xhat, inv_std, n)
        return self.gamma.values * xhat + self.beta.values

    def backward(self, grad_out):
        xhat, inv_std, n = self._take_cache()
        self.gamma.grad += (grad_out * xhat).sum(axis=0)
        self.beta.grad += grad_out.sum(axis=0)
        dxhat = grad_out * self.gamma.values
        # Batch-coupled backward: both mean and variance depend on every row.
        return (inv_std / n) * (
            n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0)
        )
