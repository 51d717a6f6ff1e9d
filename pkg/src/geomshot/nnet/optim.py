"""AdamW with global-norm gradient clipping, plus the cosine LR schedule."""

from __future__ import annotations

import math

import numpy as np

from ..errors import NonFiniteGradient
from .layers import ParamTensor


def global_grad_norm(params: list[ParamTensor]) -> float:
    return math.sqrt(sum(float((p.grad**2).sum()) for p in params))


def clip_global_norm(params: list[ParamTensor], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most max_norm.

    Returns the factor applied (1.0 when no clipping was needed).
    """
    norm = global_grad_norm(params)
    if norm <= max_norm or norm == 0.0:
        return 1.0
    factor = max_norm / norm
    for p in params:
        p.grad *= factor
    return factor


def cosine_lr(base_lr: float, epoch: int, total_epochs: int) -> float:
    """base_lr * 0.5 * (1 + cos(pi * epoch / total_epochs)), floored at 0."""
    if not 0 <= epoch <= total_epochs:
        raise ValueError("epoch must be in [0, total_epochs]")
    return max(base_lr * 0.5 * (1.0 + math.cos(math.pi * epoch / total_epochs)), 0.0)


class AdamW:
    """Decoupled-weight-decay Adam over a fixed parameter list.

    step() first verifies all gradients are finite (aborting without any
    mutation otherwise), clips the global gradient norm, applies the decay
    p *= 1 - lr*wd, then the bias-corrected Adam update.
    """

    def __init__(
        self,
        params: list[ParamTensor],
        lr: float = 1e-4,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 1e-4,
        clip_norm: float | None = 1.0,
    ):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.clip_norm = clip_norm
        self.step_count = 0
        self._m = {p.name: np.zeros_like(p.values) for p in self.params}
        self._v = {p.name: np.zeros_like(p.values) for p in self.params}

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        for p in self.params:
            if not np.all(np.isfinite(p.grad)):
                raise NonFiniteGradient(f"gradient of {p.name} is not finite")
        if self.clip_norm is not None:
            clip_global_norm(self.params, self.clip_norm)
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for p in self.params:
            if self.weight_decay:
                p.values *= 1.0 - self.lr * self.weight_decay
            m = self._m[p.name]
            v = self._v[p.name]
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad**2
            p.values -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if not np.all(np.isfinite(p.values)):
                raise NonFiniteGradient(f"{p.name} became non-finite after update")
