"""
Quadrature of the volume rendering integral along rays.

    delta_k = t_{k+1} - t_k (the last interval runs to the far plane)
    T_k     = exp(-sum_{j<k} sigma_j delta_j)          (T_1 = 1)
    w_k     = T_k (1 - exp(-sigma_k delta_k))
    C       = sum_k w_k c_k
    z       = sum_k w_k t_k
    s^2     = sum_k w_k (t_k - z)^2

Depth and std use the raw weights; they are not renormalized by the opacity.
"""

from dataclasses import dataclass
from typing import Any, Union

import numpy as np

from src.autodiff import graph as ad
from src.autodiff.graph import Node


@dataclass
class RenderResult:
    color: Node          # (N, 3)
    depth: Node          # (N,)
    std: Node            # (N,)
    variance: Node       # (N,)
    opacity: Node        # (N,)
    weights: Node        # (N, K)
    t: np.ndarray        # (N, K)


def interval_lengths(t: np.ndarray, far: Union[float, np.ndarray]) -> np.ndarray:
    far = np.broadcast_to(np.asarray(far, dtype=np.float64).reshape(-1, 1), (t.shape[0], 1))
    return np.concatenate([np.diff(t, axis=-1), np.maximum(far - t[:, -1:], 0.0)], axis=-1)


def composite(t: np.ndarray, sigma: Any, rgb: Any, far: Union[float, np.ndarray]) -> RenderResult:
    """
    Alpha-composite samples along each ray.

    Args:
        t: (N, K) strictly ascending sample distances
        sigma: (N, K) densities >= 0
        rgb: (N, K, 3) colours
        far: Far plane, scalar or per ray

    Returns:
        Differentiable colour, depth, std and opacity per ray
    """
    t = np.asarray(t, dtype=np.float64)
    if t.ndim != 2 or t.shape[1] < 1:
        raise ValueError(f"composite: sample distances must be (N, K) with K >= 1, got {t.shape}")
    if np.any(np.diff(t, axis=-1) <= 0):
        raise ValueError("composite: sample distances must be strictly ascending")
    sigma = ad.lift(sigma)
    rgb = ad.lift(rgb)
    count, samples = t.shape
    if sigma.shape != t.shape or rgb.shape != (count, samples, 3):
        raise ad.ShapeError(f"composite: sigma {sigma.shape} / rgb {rgb.shape} do not match samples {t.shape}")

    optical = sigma * interval_lengths(t, far)
    transmittance = ad.exp(-ad.cumsum(optical, axis=-1, exclusive=True))
    alpha = 1.0 - ad.exp(-optical)
    weights = transmittance * alpha

    color = ad.sum_(ad.reshape(weights, (count, samples, 1)) * rgb, axis=1)
    depth = ad.sum_(weights * t, axis=-1)
    variance = ad.sum_(weights * ad.square(ad.reshape(depth, (count, 1)) - t), axis=-1)
    return RenderResult(
        color=color,
        depth=depth,
        std=ad.sqrt(variance),
        variance=variance,
        opacity=ad.sum_(weights, axis=-1),
        weights=weights,
        t=t,
    )
