"""Gradient-descent updates: plain SGD and bias-corrected Adam."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class OptimizerState:
    kind: str = "adam"
    lr: float = 1e-3
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        self.kind = self.kind.lower()
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer {self.kind!r}")
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")


def make_optimizer(params: list[Tensor], kind: str = "adam", lr: float = 1e-3, **kw) -> OptimizerState:
    state = OptimizerState(kind=kind, lr=lr, **kw)
    if state.kind == "adam":
        state.m = [np.zeros_like(p.data) for p in params]
        state.v = [np.zeros_like(p.data) for p in params]
    return state


def optimizer_step(params: list[Tensor], state: OptimizerState) -> OptimizerState:
    """Apply one update to ``params`` from their ``.grad`` buffers.

    SGD is ``theta <- theta - lr * grad``. Adam keeps first/second moment
    estimates and divides the bias-corrected first moment by the root of the
    bias-corrected second moment. Parameter arrays are replaced, not mutated.
    """
    for i, p in enumerate(params):
        if p.grad is None:
            raise ValueError(f"parameter {i} has no gradient; call backward first")
        if p.grad.shape != p.data.shape:
            raise ValueError(f"parameter {i}: grad shape {p.grad.shape} != {p.data.shape}")
    state.t += 1
    if state.kind == "sgd":
        for p in params:
            p.data = p.data - state.lr * p.grad
        return state

    if len(state.m) != len(params):
        raise ValueError("Adam moment buffers do not match the parameter list")
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for i, p in enumerate(params):
        g = p.grad
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * (g * g)
        m_hat = state.m[i] / c1
        v_hat = state.v[i] / c2
        p.data = p.data - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return state


def zero_grad(params: list[Tensor]) -> None:
    for p in params:
        p.grad = None
