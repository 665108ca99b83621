"""
Named trainable parameters.
"""

from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np

from src.autodiff.graph import Node


@dataclass
class Parameter:
    """A named leaf node that the optimizer may update."""
    name: str
    node: Node
    trainable: bool = True

    @property
    def value(self) -> np.ndarray:
        return self.node.value

    @property
    def grad(self) -> Optional[np.ndarray]:
        return self.node.grad


class ParameterSet:
    """Ordered collection of uniquely named parameters."""

    def __init__(self) -> None:
        self._params: Dict[str, Parameter] = {}

    def add(self, name: str, value: np.ndarray, trainable: bool = True) -> Node:
        if name in self._params:
            raise ValueError(f"duplicate parameter name {name!r}")
        node = Node(np.array(value, dtype=np.float64), requires_grad=trainable, op="parameter")
        self._params[name] = Parameter(name=name, node=node, trainable=trainable)
        return node

    def __getitem__(self, name: str) -> Node:
        return self._params[name].node

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[Parameter]:
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def parameter(self, name: str) -> Parameter:
        return self._params[name]

    def names(self) -> List[str]:
        return list(self._params)

    def zero_grad(self) -> None:
        for parameter in self._params.values():
            parameter.node.grad = None

    def set_trainable(self, trainable: bool, names: Optional[List[str]] = None) -> None:
        """Freeze or unfreeze parameters; frozen ones receive no gradient."""
        for name in names if names is not None else self.names():
            parameter = self._params[name]
            parameter.trainable = trainable
            parameter.node.requires_grad = trainable

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {name: p.node.value.copy() for name, p in self._params.items()}

    def load_state_dict(self, state: Dict[str, np.ndarray]) -> None:
        missing = set(self._params) - set(state)
        if missing:
            raise ValueError(f"state is missing parameters: {sorted(missing)}")
        for name, parameter in self._params.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != parameter.node.value.shape:
                raise ValueError(
                    f"parameter {name!r}: expected shape {parameter.node.value.shape}, got {value.shape}"
                )
            parameter.node.value = value.copy()

    def num_values(self) -> int:
        return int(sum(p.node.value.size for p in self._params.values()))


def glorot_uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def he_uniform(rng: np.random.Generator, shape: Tuple[int, ...], fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)
