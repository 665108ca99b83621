# Reverse-mode automatic differentiation
from src.autodiff.graph import (
    OP_KINDS,
    Node,
    ShapeError,
    backward,
    forward_op,
    lift,
    no_grad,
)
from src.autodiff.optim import Adam, AdamState, MissingGradientError, adam_step
from src.autodiff.params import Parameter, ParameterSet

__all__ = [
    "OP_KINDS",
    "Adam",
    "AdamState",
    "MissingGradientError",
    "Node",
    "Parameter",
    "ParameterSet",
    "ShapeError",
    "adam_step",
    "backward",
    "forward_op",
    "lift",
    "no_grad",
]
