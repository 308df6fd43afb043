"""Adam with Nesterov look-ahead on the first moment (Nadam)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


@dataclass
class NadamState:
    """Optimizer state; moment buffers are congruent with the parameter list."""

    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    learning_rate: float = 0.001

    @classmethod
    def for_params(cls, params: list[Tensor], learning_rate: float = 0.001,
                   beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-7) -> "NadamState":
        return cls(first_moment=[np.zeros_like(p.data) for p in params],
                   second_moment=[np.zeros_like(p.data) for p in params],
                   beta1=beta1, beta2=beta2, epsilon=epsilon, learning_rate=learning_rate)


def nadam_step(params: list[Tensor], grads: list[np.ndarray], state: NadamState):
    """One Nadam update, element-wise per parameter. Mutates params and state.

    m <- b1 m + (1-b1) g          v <- b2 v + (1-b2) g^2
    m_hat = m / (1 - b1^t)        v_hat = v / (1 - b2^t)
    m_bar = b1 m_hat + (1-b1) g / (1 - b1^t)      (Nesterov look-ahead)
    p <- p - lr * m_bar / (sqrt(v_hat) + eps)
    """
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ValueError("params, grads and optimizer state are not congruent")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        g = np.asarray(g, dtype=p.data.dtype)
        if g.shape != p.data.shape:
            raise ValueError(f"gradient shape {g.shape} incongruent with parameter {p.name} {p.data.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        m_bar = b1 * (m / bc1) + (1.0 - b1) * g / bc1
        p.data -= (state.learning_rate * m_bar / (np.sqrt(v / bc2) + state.epsilon)).astype(p.data.dtype)
    state.step = t
    return params, state
