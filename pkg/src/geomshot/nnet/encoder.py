"""MLP encoder: [Linear -> BatchNorm1d -> ReLU -> Dropout] blocks + projection.

The default configuration (two 256-unit hidden blocks, 128-D output,
dropout 0.3) has 105,088 / 116,096 / 121,216 trainable parameters for
input dimensions 20 / 63 / 83. The count covers Linear weights+biases and
BatchNorm scale+shift; BatchNorm running statistics are buffers and are
not counted (this accounting is pinned by test_encoder).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import CacheError, ShapeError
from ..rng import STREAM_INIT, make_rng
from .layers import BatchNorm1d, Dropout, Linear, ParamTensor, ReLU


@dataclass(frozen=True)
class EncoderConfig:
    input_dim: int
    hidden_dim: int = 256
    num_hidden: int = 2
    embed_dim: int = 128
    dropout_p: float = 0.3

    def __post_init__(self):
        if min(self.input_dim, self.hidden_dim, self.num_hidden, self.embed_dim) < 1:
            raise ValueError("encoder dimensions must be positive")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must be in [0, 1)")

    def param_count(self) -> int:
        dims = [self.input_dim] + [self.hidden_dim] * self.num_hidden
        total = 0
        for a, b in zip(dims[:-1], dims[1:]):
            total += a * b + b  # linear
            total += 2 * b  # batchnorm gamma + beta
        total += self.hidden_dim * self.embed_dim + self.embed_dim  # head
        return total

    def tensor_names(self) -> list[str]:
        """Every checkpointed tensor: trainable params plus running stats."""
        names = []
        for i in range(1, self.num_hidden + 1):
            names += [f"fc{i}.weight", f"fc{i}.bias", f"bn{i}.gamma", f"bn{i}.beta"]
        names += ["head.weight", "head.bias"]
        for i in range(1, self.num_hidden + 1):
            names += [f"bn{i}.running_mean", f"bn{i}.running_var"]
        return names


class MLPEncoder:
    """Maps (B, input_dim) batches to (B, embed_dim) embeddings.

    Weight initialization draws from the stream
    make_rng(STREAM_INIT, seed) in layer order, so an
    (EncoderConfig, seed) pair fully determines the initial parameters.
    """

    def __init__(self, config: EncoderConfig, seed: int):
        self.config = config
        rng = make_rng(STREAM_INIT, seed)
        self.layers = []
        in_dim = config.input_dim
        for i in range(1, config.num_hidden + 1):
            self.layers.append(Linear(in_dim, config.hidden_dim, f"fc{i}", rng))
            self.layers.append(BatchNorm1d(config.hidden_dim, f"bn{i}"))
            self.layers.append(ReLU())
            self.layers.append(Dropout(config.dropout_p))
            in_dim = config.hidden_dim
        self.head = Linear(in_dim, config.embed_dim, "head", rng)
        self.layers.append(self.head)
        self._train_forward = False

    # -- parameter access -------------------------------------------------

    def parameters(self) -> list[ParamTensor]:
        params = []
        for layer in self.layers:
            params.extend(layer.parameters())
        return params

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        bufs = []
        for layer in self.layers:
            bufs.extend(layer.buffers())
        return bufs

    def head_parameters(self) -> list[ParamTensor]:
        return self.head.parameters()

    def param_count(self) -> int:
        return sum(p.values.size for p in self.parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def state(self) -> dict[str, np.ndarray]:
        out = {p.name: p.values.copy() for p in self.parameters()}
        out.update({name: buf.copy() for name, buf in self.buffers()})
        return out

    def set_state(self, state: dict[str, np.ndarray]) -> None:
        for p in self.parameters():
            if p.name not in state:
                raise ShapeError(f"state is missing tensor {p.name}")
            arr = np.asarray(state[p.name], dtype=np.float64)
            if arr.shape != p.values.shape:
                raise ShapeError(f"{p.name}: shape {arr.shape} != {p.values.shape}")
            p.values[...] = arr
        for name, buf in self.buffers():
            if name not in state:
                raise ShapeError(f"state is missing buffer {name}")
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != buf.shape:
                raise ShapeError(f"{name}: shape {arr.shape} != {buf.shape}")
            buf[...] = arr

    # -- forward / backward ------------------------------------------------

    def _check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.config.input_dim:
            raise ShapeError(
                f"expected (B, {self.config.input_dim}) input, got {x.shape}"
            )
        if x.shape[0] < 1:
            raise ShapeError("empty batch")
        return x

    def forward(self, x: np.ndarray, train: bool, rng: np.random.Generator | None = None) -> np.ndarray:
        """Full forward pass. Train mode needs B >= 2 and an rng for dropout."""
        x = self._check_input(x)
        if train and self.config.dropout_p > 0.0 and rng is None:
            raise ValueError("train-mode forward needs an rng for dropout")
        for layer in self.layers:
            x = layer.forward(x, train, rng)
        self._train_forward = train
        return x

    def backward(self, grad_embeddings: np.ndarray) -> np.ndarray:
        """Accumulate parameter gradients; returns the input gradient."""
        if not self._train_forward:
            raise CacheError("backward requires a preceding train-mode forward")
        self._train_forward = False
        g = np.asarray(grad_embeddings, dtype=np.float64)
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def backbone_forward(self, x: np.ndarray) -> np.ndarray:
        """Eval-mode features right before the final projection."""
        x = self._check_input(x)
        for layer in self.layers[:-1]:
            x = layer.forward(x, train=False)
        return x
