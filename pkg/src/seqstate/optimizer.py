"""Adam with bias correction, applied uniformly to every parameter group.

The initial-state table is updated exactly like any weight matrix: same
learning rate, same moment estimates. Steps are functional (new params and
new state are returned) so a training run can be checkpointed and resumed
bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backprop import Gradients
from .model import PARAM_FIELDS, ModelParams
from .numerics import ShapeError


@dataclass
class AdamState:
    """First/second moment estimates per parameter group plus step counter."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step_count: int = 0
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.step_count < 0:
            raise ValueError("step_count must be >= 0")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must lie in [0, 1)")
        if self.lr <= 0.0 or self.eps <= 0.0:
            raise ValueError("lr and eps must be positive")

    def copy(self) -> "AdamState":
        return AdamState(
            m={k: a.copy() for k, a in self.m.items()},
            v={k: a.copy() for k, a in self.v.items()},
            step_count=self.step_count,
            lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps,
        )


def init_adam(
    params: ModelParams,
    lr: float = 0.001,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> AdamState:
    zeros = {f: np.zeros_like(getattr(params, f)) for f in PARAM_FIELDS}
    return AdamState(
        m=zeros,
        v={f: np.zeros_like(getattr(params, f)) for f in PARAM_FIELDS},
        step_count=0, lr=lr, beta1=beta1, beta2=beta2, eps=eps,
    )


def adam_step(
    params: ModelParams, grads: Gradients, state: AdamState
) -> tuple[ModelParams, AdamState]:
    """One bias-corrected Adam update.

    m <- b1*m + (1-b1)*g,  v <- b2*v + (1-b2)*g^2,
    theta <- theta - lr * (m/(1-b1^t)) / (sqrt(v/(1-b2^t)) + eps).
    """
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    new_params = {}
    new_m = {}
    new_v = {}
    for f in PARAM_FIELDS:
        p = getattr(params, f)
        g = getattr(grads, f)
        if p.shape != g.shape:
            raise ShapeError(f"gradient for {f} has shape {g.shape}, params {p.shape}")
        if not np.all(np.isfinite(g)):
            raise ValueError(f"non-finite gradient entry in parameter group {f!r}")
        m = b1 * state.m[f] + (1.0 - b1) * g
        v = b2 * state.v[f] + (1.0 - b2) * (g * g)
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        new_params[f] = p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[f] = m
        new_v[f] = v
    next_state = AdamState(
        m=new_m, v=new_v, step_count=t,
        lr=state.lr, beta1=b1, beta2=b2, eps=state.eps,
    )
    return ModelParams(**new_params), next_state
