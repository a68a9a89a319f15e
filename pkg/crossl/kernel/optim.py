"""Adam optimizer."""

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from crossl.kernel.tensor import Parameter


@dataclass
class AdamState:
    """
    Moment estimates and step counts keyed by parameter name.

    ``t`` counts calls to ``adam_step``; bias correction uses the per-parameter
    count in ``steps``, so a parameter unfrozen late starts like a fresh one.
    """

    lr: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps_opt: float = 1e-8
    t: int = 0
    first: dict[str, np.ndarray] = field(default_factory=dict)
    second: dict[str, np.ndarray] = field(default_factory=dict)
    steps: dict[str, int] = field(default_factory=dict)


def adam_step(params: Iterable[Parameter], state: AdamState) -> None:
    """
    Apply one bias-corrected Adam update, then zero every gradient.

    Frozen parameters (``trainable == False``) keep their value, moments and
    step count untouched; their gradients are still cleared.

    Args:
        params: Parameters to update
        state: Optimizer state, mutated in place
    """
    state.t += 1
    for param in params:
        if param.trainable:
            grad = param.grad
            m = state.first.get(param.name)
            v = state.second.get(param.name)
            if m is None or v is None:
                m = np.zeros_like(param.value)
                v = np.zeros_like(param.value)
            m = state.beta1 * m + (1.0 - state.beta1) * grad
            v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
            state.first[param.name] = m
            state.second[param.name] = v
            step = state.steps.get(param.name, 0) + 1
            state.steps[param.name] = step
            m_hat = m / (1.0 - state.beta1**step)
            v_hat = v / (1.0 - state.beta2**step)
            param.value = param.value - state.lr * m_hat / (np.sqrt(v_hat) + state.eps_opt)
        param.zero_grad()
