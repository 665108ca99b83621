"""
Radiance field losses: colour MSE and the gated depth term.

The depth term is active on a ray when the rendered depth misses the prior by more than
the prior std, or when the rendered std exceeds the prior std:

    P = |z_hat - z| > s        Q = s_hat > s
    L = log(s_hat^2) + (z_hat - z)^2 / s_hat^2   if P or Q, else 0
"""

from typing import Any, Tuple

import numpy as np

from src.autodiff import graph as ad
from src.autodiff.graph import Node

DEPTH_LOSS_KINDS = ("gnll", "mse")


def color_loss(color: Any, target: np.ndarray) -> Node:
    """Mean over rays of the squared L2 distance over RGB."""
    color = ad.lift(color)
    target = np.asarray(target, dtype=np.float64)
    if color.shape != target.shape:
        raise ValueError(f"color_loss: rendered {color.shape} vs target {target.shape}")
    return ad.mean(ad.sum_(ad.square(color - target), axis=-1))


def depth_gate(depth: np.ndarray, std: np.ndarray, target_depth: np.ndarray, target_std: np.ndarray) -> np.ndarray:
    """Rays on which the depth term is active."""
    return (np.abs(depth - target_depth) > target_std) | (std > target_std)


def depth_loss_terms(
    depth: Any,
    std: Any,
    target_depth: np.ndarray,
    target_std: np.ndarray,
    kind: str = "gnll",
    gated: bool = True,
    std_floor: float = 1e-6,
) -> Tuple[Node, np.ndarray]:
    """
    Per-ray depth loss.

    Args:
        depth: Rendered depth z_hat (N,)
        std: Rendered std s_hat (N,), floored at `std_floor`
        target_depth: Prior depth z (N,)
        target_std: Prior std s (N,), positive
        kind: "gnll", or "mse" for a plain squared depth residual
        gated: Apply the P-or-Q gate; ungated terms are active on every ray

    Returns:
        (per-ray loss node, active mask)
    """
    if kind not in DEPTH_LOSS_KINDS:
        raise ValueError(f"depth_loss: unknown kind {kind!r}; expected one of {DEPTH_LOSS_KINDS}")
    depth = ad.lift(depth)
    std = ad.lift(std)
    target_depth = np.asarray(target_depth, dtype=np.float64)
    target_std = np.asarray(target_std, dtype=np.float64)
    if depth.shape != target_depth.shape or std.shape != target_depth.shape or target_std.shape != target_depth.shape:
        raise ValueError(
            f"depth_loss: shapes differ depth {depth.shape}, std {std.shape}, "
            f"target {target_depth.shape}, target std {target_std.shape}"
        )
    if gated and np.any(target_std <= 0):
        raise ValueError("depth_loss: prior std must be positive")

    residual = ad.square(depth - target_depth)
    if kind == "gnll":
        variance = ad.square(ad.clamp_min(std, std_floor))
        per_ray = ad.log(variance) + residual / variance
    else:
        per_ray = residual

    if gated:
        active = depth_gate(depth.value, std.value, target_depth, target_std)
    else:
        active = np.ones(target_depth.shape, dtype=bool)
    return per_ray * active.astype(np.float64), active


def depth_loss(
    depth: Any,
    std: Any,
    target_depth: np.ndarray,
    target_std: np.ndarray,
    kind: str = "gnll",
    gated: bool = True,
    std_floor: float = 1e-6,
) -> Node:
    """Mean of `depth_loss_terms` over rays; inactive rays contribute zero and no gradient."""
    terms, _ = depth_loss_terms(depth, std, target_depth, target_std, kind, gated, std_floor)
    return ad.mean(terms)
