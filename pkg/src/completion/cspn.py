"""
Convolutional spatial propagation over 3x3 neighbourhoods.

Raw affinities (N, 8, H, W) are normalized per pixel to a_k = raw_k / (sum_k |raw_k| + 1),
so sum_k |a_k| < 1, and the centre weight is 1 - sum_k |a_k|. The absolute weights of a
pixel therefore sum to one and every propagation step is non-expansive in max-norm.
"""

from typing import Any, Optional, Tuple

import numpy as np

from src.autodiff import graph as ad
from src.autodiff.graph import Node

# (dy, dx) of the eight neighbours, row-major around the centre.
NEIGHBOR_OFFSETS: Tuple[Tuple[int, int], ...] = (
    (-1, -1), (-1, 0), (-1, 1),
    (0, -1), (0, 1),
    (1, -1), (1, 0), (1, 1),
)


def normalize_affinity(raw: Any, convex: bool = False) -> Tuple[Node, Node]:
    """
    Stability-normalize raw affinities.

    Args:
        raw: (N, 8, H, W) raw neighbour weights
        convex: Use |raw| so that all nine weights are non-negative

    Returns:
        (neighbour weights (N, 8, H, W), centre weight (N, 1, H, W))
    """
    raw = ad.lift(raw)
    if raw.value.ndim != 4 or raw.value.shape[1] != len(NEIGHBOR_OFFSETS):
        raise ad.ShapeError(f"affinity must be (N, 8, H, W), got {raw.shape}")
    magnitude = ad.absolute(raw)
    if convex:
        raw = magnitude
    total = ad.sum_(magnitude, axis=1, keepdims=True) + 1.0
    weights = raw / total
    center = 1.0 - ad.sum_(ad.absolute(weights), axis=1, keepdims=True)
    return weights, center


def _neighbors(x: Node) -> Node:
    """Stack the eight edge-padded shifts of an (N, 1, H, W) map into (N, 8, H, W)."""
    height, width = x.value.shape[-2:]
    padded = ad.pad2d(x, 1, mode="edge")
    shifts = [
        padded[:, :, 1 + dy:1 + dy + height, 1 + dx:1 + dx + width]
        for dy, dx in NEIGHBOR_OFFSETS
    ]
    return ad.concat(shifts, axis=1)


def cspn_refine(
    initial: Any,
    affinity: Any,
    anchors: Optional[np.ndarray] = None,
    iterations: int = 1,
    convex: bool = False,
) -> Node:
    """
    Iteratively replace every pixel by the affinity-weighted mix of its 3x3 neighbourhood.

    Args:
        initial: (N, 1, H, W) map
        affinity: (N, 8, H, W) raw affinities
        anchors: Optional (N, 1, H, W) sparse values; pixels > 0 are reset to them after
            every iteration
        iterations: Number of propagation steps (0 returns the input)
        convex: Non-negative weights (used for maps that must keep their lower bound)

    Returns:
        Refined (N, 1, H, W) map
    """
    if iterations < 0:
        raise ValueError(f"iterations must be >= 0, got {iterations}")
    x = ad.lift(initial)
    if x.value.ndim != 4 or x.value.shape[1] != 1:
        raise ad.ShapeError(f"cspn_refine: map must be (N, 1, H, W), got {x.shape}")
    weights, center = normalize_affinity(affinity, convex=convex)
    if weights.shape[0] != x.shape[0] or weights.shape[2:] != x.shape[2:]:
        raise ad.ShapeError(f"cspn_refine: affinity {weights.shape} does not match map {x.shape}")

    keep = values = None
    if anchors is not None:
        anchors = np.asarray(anchors, dtype=np.float64)
        if anchors.shape != x.shape:
            raise ad.ShapeError(f"cspn_refine: anchors {anchors.shape} do not match map {x.shape}")
        mask = (anchors > 0).astype(np.float64)
        keep = 1.0 - mask
        values = mask * anchors

    for _ in range(iterations):
        x = center * x + ad.sum_(weights * _neighbors(x), axis=1, keepdims=True)
        if keep is not None:
            x = x * keep + values
    return x
