"""Adan (adaptive Nesterov momentum) with decoupled weight decay, plus plain Adam."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeMismatch, ValidationError


@dataclass(frozen=True)
class AdanHyper:
    lr: float = 2e-4
    betas: tuple[float, float, float] = (0.98, 0.92, 0.99)
    eps: float = 1e-8
    weight_decay: float = 0.02
    mode: str = "adan"

    def __post_init__(self):
        if len(self.betas) != 3:
            raise ValidationError(f"Adan needs three betas, got {self.betas}")
        for i, beta in enumerate(self.betas):
            if not 0.0 <= beta < 1.0:
                raise ValidationError(f"Invalid beta parameter at index {i}: {beta}")
        if self.lr <= 0 or self.eps <= 0 or self.weight_decay < 0:
            raise ValidationError("lr and eps must be > 0, weight_decay >= 0")
        if self.mode not in ("adan", "adam"):
            raise ValidationError(f"Unknown optimizer mode {self.mode!r}")


@dataclass
class OptimizerState:
    """Per-parameter moments: m (gradient), v (gradient difference), n (squared)."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    n: dict[str, np.ndarray] = field(default_factory=dict)
    prev_grad: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def zeros(cls, params: dict[str, np.ndarray]) -> "OptimizerState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
            n={k: np.zeros_like(p) for k, p in params.items()},
            prev_grad={},
        )


def adan_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray | None],
    state: OptimizerState,
    hyper: AdanHyper,
) -> tuple[dict[str, np.ndarray], OptimizerState]:
    """One optimizer update; returns new parameters and a new state.

    A missing gradient counts as zero. On the first step the previous gradient
    is the current one, so the difference moment starts at zero.
    """
    beta1, beta2, beta3 = hyper.betas
    step = state.step + 1
    bc1 = 1.0 - beta1**step
    bc2 = 1.0 - beta2**step
    bc3 = 1.0 - beta3**step
    shrink = 1.0 + hyper.lr * hyper.weight_decay
    new_state = OptimizerState(step=step)
    new_params = {}
    for name, theta in params.items():
        g = grads.get(name)
        g = np.zeros_like(theta) if g is None else np.asarray(g, dtype=np.float64)
        if g.shape != theta.shape:
            raise ShapeMismatch(f"Gradient for {name} is {g.shape}, not {theta.shape}")
        m = state.m.get(name, np.zeros_like(theta))
        n = state.n.get(name, np.zeros_like(theta))
        if hyper.mode == "adam":
            m = beta1 * m + (1.0 - beta1) * g
            n = beta3 * n + (1.0 - beta3) * g * g
            update = (m / bc1) / (np.sqrt(n / bc3) + hyper.eps)
            v = state.v.get(name, np.zeros_like(theta))
        else:
            diff = g - state.prev_grad.get(name, g)
            v = state.v.get(name, np.zeros_like(theta))
            m = beta1 * m + (1.0 - beta1) * g
            v = beta2 * v + (1.0 - beta2) * diff
            mixed = g + beta2 * diff
            n = beta3 * n + (1.0 - beta3) * mixed * mixed
            update = (m / bc1 + beta2 * v / bc2) / (np.sqrt(n / bc3) + hyper.eps)
        new_params[name] = (theta - hyper.lr * update) / shrink
        new_state.m[name] = m
        new_state.v[name] = v
        new_state.n[name] = n
        new_state.prev_grad[name] = g
    return new_params, new_state
