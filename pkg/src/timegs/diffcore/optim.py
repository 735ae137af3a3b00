from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import DiffTensor, GradientError


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_param(cls, p: DiffTensor, lr: float = 1e-3, **kw) -> "AdamState":
        return cls(m=np.zeros_like(p.values), v=np.zeros_like(p.values), lr=lr, **kw)


def adam_step(params: Sequence[DiffTensor], states: Sequence[AdamState], lr: float | None = None) -> None:
    """One bias-corrected Adam update per parameter, then zero the gradients."""
    if len(params) != len(states):
        raise ValueError(f"adam_step: {len(params)} params but {len(states)} states")
    for p in params:
        if p.grad is None:
            raise GradientError(f"adam_step: parameter {p.name or p.node_id!r} has no gradient")
    for p, st in zip(params, states):
        g = p.grad
        st.t += 1
        step_lr = st.lr if lr is None else lr
        st.m *= st.beta1
        st.m += (1.0 - st.beta1) * g
        st.v *= st.beta2
        st.v += (1.0 - st.beta2) * (g * g)
        m_hat = st.m / (1.0 - st.beta1 ** st.t)
        v_hat = st.v / (1.0 - st.beta2 ** st.t)
        p.values = p.values - step_lr * m_hat / (np.sqrt(v_hat) + st.eps)
        p.grad = np.zeros_like(p.values)


@dataclass
class Adam:
    params: list[DiffTensor]
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    states: list[AdamState] = field(init=False)

    def __post_init__(self):
        self.params = list(self.params)
        self.states = [
            AdamState.for_param(p, lr=self.lr, beta1=self.beta1, beta2=self.beta2, eps=self.eps)
            for p in self.params
        ]

    def step(self) -> None:
        adam_step(self.params, self.states)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
