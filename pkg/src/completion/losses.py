"""
Gaussian negative log likelihood for depth and std predictions.
"""

from typing import Any, Optional

import numpy as np

from src.autodiff import graph as ad
from src.autodiff.graph import Node


def gnll_loss(depth: Any, std: Any, target: np.ndarray, valid: Optional[np.ndarray] = None, floor: float = 1e-6) -> Node:
    """
    Mean over valid pixels of log(s^2) + (z - z_target)^2 / s^2.

    Args:
        depth: Predicted depth (Node or array)
        std: Predicted std, floored at `floor` before use
        target: Sensor depth, same shape
        valid: Boolean mask; defaults to target > 0

    Returns:
        Scalar loss node
    """
    depth = ad.lift(depth)
    std = ad.lift(std)
    target = np.asarray(target, dtype=np.float64)
    if depth.shape != target.shape or std.shape != target.shape:
        raise ValueError(f"gnll_loss: shapes differ depth {depth.shape}, std {std.shape}, target {target.shape}")
    mask = (target > 0) if valid is None else np.asarray(valid, dtype=bool)
    count = int(mask.sum())
    if count == 0:
        raise ValueError("gnll_loss: no valid target pixels")

    variance = ad.square(ad.clamp_min(std, floor))
    per_pixel = ad.log(variance) + ad.square(depth - target) / variance
    return ad.sum_(per_pixel * mask.astype(np.float64)) / float(count)
