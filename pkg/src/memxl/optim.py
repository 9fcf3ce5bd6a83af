"""Adam with bias correction, cosine learning-rate annealing, and global
gradient-norm clipping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor


def cosine_lr(step: int, base_lr: float, max_iters: int) -> float:
    """Half-cosine decay from ``base_lr`` to 0; flat 0 past ``max_iters``."""
    if step < 0:
        raise ValueError(f"step must be nonnegative, got {step}")
    if max_iters < 1:
        raise ValueError(f"max_iters must be positive, got {max_iters}")
    frac = min(step, max_iters) / max_iters
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * frac))


def clip_global_norm(params: list[Tensor], max_norm: float) -> float:
    """Scale all gradients so their joint L2 norm is at most ``max_norm``.

    Returns the pre-clip norm."""
    if max_norm <= 0:
        raise ValueError(f"max_norm must be positive, got {max_norm}")
    total_sq = 0.0
    for p in params:
        if p.grad is not None:
            total_sq += float(np.sum(p.grad * p.grad))
    total = math.sqrt(total_sq)
    if total > max_norm:
        scale = max_norm / total
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return total


@dataclass
class AdamState:
    """First/second moment estimates keyed by parameter name."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @staticmethod
    def init(named_params: list[tuple[str, Tensor]]) -> "AdamState":
        return AdamState(
            m={name: np.zeros(p.shape, dtype=p.dtype) for name, p in named_params},
            v={name: np.zeros(p.shape, dtype=p.dtype) for name, p in named_params},
        )


def adam_update(
    named_params: list[tuple[str, Tensor]],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam step, in place. Missing grads count as zero."""
    state.t += 1
    bc1 = 1.0 - beta1**state.t
    bc2 = 1.0 - beta2**state.t
    for name, p in named_params:
        if name not in state.m:
            raise KeyError(f"optimizer state has no entry for parameter {name!r}")
        g = p.grad if p.grad is not None else np.zeros(p.shape, dtype=p.dtype)
        m = state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        v = state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * (g * g)
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
