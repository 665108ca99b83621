"""
Sample placement along rays: stratified bins, Gaussian draws around a depth estimate,
and the depth-guided mix of both.
"""

from typing import Tuple, Union

import numpy as np
from scipy.special import ndtri

ArrayLike = Union[float, np.ndarray]

# duplicates are pushed apart by this fraction of the [near, far] span
ASCENT_EPSILON = 1e-6


def _per_ray(value: ArrayLike, rays: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(value, dtype=np.float64).reshape(-1, 1), (rays, 1))


def _ray_count(*values: ArrayLike, rays: int = 1) -> int:
    sizes = [np.asarray(v).size for v in values if np.asarray(v).ndim > 0]
    return max(sizes + [rays])


def stratified_uniforms(rng: np.random.Generator, rays: int, count: int) -> np.ndarray:
    """One uniform draw in each of `count` equal bins of [0, 1)."""
    return (np.arange(count) + rng.random((rays, count))) / count


def stratified_sample(
    near: ArrayLike, far: ArrayLike, count: int, rng: np.random.Generator, rays: int = 1
) -> np.ndarray:
    """
    One uniform draw per equal-width bin of [near, far].

    Args:
        near, far: Scalars or per-ray arrays
        count: Samples per ray (>= 1)
        rng: Random generator
        rays: Ray count when near and far are scalars

    Returns:
        (rays, count) ascending sample distances
    """
    if count < 1:
        raise ValueError(f"stratified_sample: count must be >= 1, got {count}")
    rays = _ray_count(near, far, rays=rays)
    lo, hi = _per_ray(near, rays), _per_ray(far, rays)
    return lo + (hi - lo) * stratified_uniforms(rng, rays, count)


def gaussian_samples(
    mean: ArrayLike, std: ArrayLike, near: ArrayLike, far: ArrayLike, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Inverse-CDF draws of N(mean, std^2) from stratified uniforms, clamped to [near, far]."""
    rays = _ray_count(mean, std, near, far)
    quantiles = ndtri(stratified_uniforms(rng, rays, count))
    draws = _per_ray(mean, rays) + _per_ray(std, rays) * quantiles
    return np.clip(draws, _per_ray(near, rays), _per_ray(far, rays))


def make_strictly_ascending(t: np.ndarray, near: ArrayLike, far: ArrayLike) -> np.ndarray:
    """
    Separate equal neighbours of sorted samples by at least ASCENT_EPSILON * (far - near),
    keeping every sample at or below the far plane.
    """
    t = np.asarray(t, dtype=np.float64)
    rays, count = t.shape
    lo, hi = _per_ray(near, rays), _per_ray(far, rays)
    eps = ASCENT_EPSILON * (hi - lo)
    steps = np.arange(count) * eps
    rising = np.maximum.accumulate(t - steps, axis=-1) + steps
    remaining = (count - 1 - np.arange(count)) * eps
    capped = np.minimum(rising + remaining, hi)
    return capped - remaining


def merge_samples(first: np.ndarray, second: np.ndarray, near: ArrayLike, far: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    """
    Merge two per-ray sample sets.

    Returns:
        (strictly ascending merged samples, column order into concat([first, second]))
    """
    joined = np.concatenate([first, second], axis=-1)
    order = np.argsort(joined, axis=-1, kind="stable")
    merged = np.take_along_axis(joined, order, axis=-1)
    return make_strictly_ascending(merged, near, far), order


def depth_guided_sample(
    near: ArrayLike,
    far: ArrayLike,
    mean: ArrayLike,
    std: ArrayLike,
    count: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    Half of the samples stratified over [near, far], the other half drawn from N(mean, std^2).

    Args:
        near, far: Sampling range
        mean, std: Depth prior per ray (std > 0)
        count: Total samples per ray; an odd count gives the extra sample to the stratified half
        rng: Random generator

    Returns:
        (rays, count) strictly ascending sample distances
    """
    if count < 2:
        raise ValueError(f"depth_guided_sample: count must be >= 2, got {count}")
    if np.any(np.asarray(std) <= 0):
        raise ValueError("depth_guided_sample: prior std must be positive")
    guided = count // 2
    rays = _ray_count(near, far, mean, std)
    uniform = stratified_sample(near, far, count - guided, rng, rays=rays)
    gaussian = gaussian_samples(mean, std, near, far, guided, rng)
    merged, _ = merge_samples(uniform, gaussian, near, far)
    return merged
