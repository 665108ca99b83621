"""
Adam optimizer over a ParameterSet.
"""

from dataclasses import dataclass, field
from typing import Dict

import numpy as np

from src.autodiff.params import ParameterSet


class MissingGradientError(ValueError):
    """A trainable parameter has no gradient at step time."""


@dataclass
class AdamState:
    """First/second moment estimates and the step counter."""
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: ParameterSet,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> ParameterSet:
    """
    Apply one bias-corrected Adam update in place. Gradients are left untouched.

    Args:
        params: Parameters with populated gradients
        state: Moment estimates, updated in place
        lr: Learning rate

    Returns:
        The updated parameter set
    """
    trainable = [p for p in params if p.trainable]
    for parameter in trainable:
        if parameter.grad is None:
            raise MissingGradientError(f"parameter {parameter.name!r} has no gradient")

    state.step += 1
    bias1 = 1.0 - beta1 ** state.step
    bias2 = 1.0 - beta2 ** state.step
    step_size = lr / bias1

    for parameter in trainable:
        name, g = parameter.name, parameter.grad
        if name not in state.m:
            state.m[name] = np.zeros_like(parameter.value)
            state.v[name] = np.zeros_like(parameter.value)
        m, v = state.m[name], state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        denom = np.sqrt(v / bias2) + eps
        parameter.node.value = parameter.node.value - step_size * m / denom

    return params


class Adam:
    """Stateful wrapper around adam_step."""

    def __init__(self, params: ParameterSet, lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = AdamState()

    def zero_grad(self) -> None:
        self.params.zero_grad()

    def step(self) -> None:
        adam_step(self.params, self.state, self.lr, self.beta1, self.beta2, self.eps)
