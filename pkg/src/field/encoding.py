"""
Sinusoidal positional encoding and scene-box normalization.

    gamma(x) = [x, sin(2^0 pi x), cos(2^0 pi x), ..., sin(2^(L-1) pi x), cos(2^(L-1) pi x)]

Output width is 3 + 3 * 2 * L for 3-D inputs.
"""

from dataclasses import dataclass
from typing import Any

import numpy as np

from src.autodiff import graph as ad
from src.autodiff.graph import Node


def encoded_width(frequencies: int, input_dim: int = 3) -> int:
    return input_dim + 2 * input_dim * frequencies


def encode_position(x: Any, frequencies: int) -> Node:
    """Encode (N, D) coordinates with `frequencies` octaves; raw coordinates come first."""
    if frequencies < 0:
        raise ValueError(f"frequency count must be >= 0, got {frequencies}")
    x = ad.lift(x)
    parts = [x]
    for level in range(frequencies):
        scaled = x * ((2.0 ** level) * np.pi)
        parts.append(ad.sin(scaled))
        parts.append(ad.cos(scaled))
    return parts[0] if len(parts) == 1 else ad.concat(parts, axis=-1)


@dataclass(frozen=True)
class SceneBounds:
    """Isotropic map of the scene box onto [-1, 1]^3."""
    center: np.ndarray
    half_extent: float

    @classmethod
    def from_box(cls, lower: np.ndarray, upper: np.ndarray) -> "SceneBounds":
        lower = np.asarray(lower, dtype=np.float64)
        upper = np.asarray(upper, dtype=np.float64)
        return cls(center=(lower + upper) / 2.0, half_extent=float(np.max(upper - lower) / 2.0))

    def normalize(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points, dtype=np.float64) - self.center) / self.half_extent
