"""
Rendering rays through a radiance field: field queries along rays, the two-pass
test-time sampler and whole-image rendering.
"""

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from src.autodiff import graph as ad
from src.autodiff.graph import Node
from src.field.mlp import FieldMLP
from src.render.sampling import ArrayLike, gaussian_samples, merge_samples, stratified_sample
from src.render.volume import RenderResult, composite
from src.scene.camera import Intrinsics, Pose, Ray, image_rays
from src.utils.logging_setup import get_pipeline_logger

# pass-1 opacity below this means no surface was found along the ray
FALLBACK_OPACITY = 1e-4


@dataclass
class TwoPassInfo:
    """Diagnostics of the two-pass sampler."""
    pass_one_depth: np.ndarray
    pass_one_std: np.ndarray
    fallback: np.ndarray        # rays whose second half was stratified
    samples: np.ndarray         # second-half sample distances


def query_along_rays(
    field: FieldMLP, origins: np.ndarray, directions: np.ndarray, t: np.ndarray, codes: Optional[Node] = None
) -> Tuple[Node, Node]:
    """
    Query the field at origin + t * direction.

    Returns:
        (colour (N, K, 3), density (N, K))
    """
    rays, samples = t.shape
    points = origins[:, None, :] + t[..., None] * directions[:, None, :]
    sample_dirs = np.repeat(directions, samples, axis=0)
    sample_codes = None
    if codes is not None:
        sample_codes = ad.take(codes, np.repeat(np.arange(rays), samples))
    rgb, sigma = field.query(points.reshape(-1, 3), sample_dirs, sample_codes)
    return ad.reshape(rgb, (rays, samples, 3)), ad.reshape(sigma, (rays, samples))


def render_rays(
    field: FieldMLP,
    origins: np.ndarray,
    directions: np.ndarray,
    t: np.ndarray,
    far: ArrayLike,
    codes: Optional[Node] = None,
) -> RenderResult:
    """Composite the field along rays at fixed sample distances."""
    rgb, sigma = query_along_rays(field, origins, directions, t, codes)
    return composite(t, sigma, rgb, far)


def _merge_queries(
    t_first: np.ndarray,
    raw_first: Tuple[Node, Node],
    t_second: np.ndarray,
    raw_second: Tuple[Node, Node],
    near: ArrayLike,
    far: ArrayLike,
) -> Tuple[np.ndarray, Node, Node]:
    """Sort the union of two queried sample sets, permuting the field outputs alongside."""
    rays = t_first.shape[0]
    t, order = merge_samples(t_first, t_second, near, far)
    total = t.shape[1]
    flat = order + (np.arange(rays) * total)[:, None]
    rgb = ad.reshape(ad.concat([raw_first[0], raw_second[0]], axis=1), (rays * total, 3))
    sigma = ad.reshape(ad.concat([raw_first[1], raw_second[1]], axis=1), (rays * total,))
    return t, ad.take(rgb, flat), ad.take(sigma, flat)


def render_two_pass(
    field: FieldMLP,
    origins: np.ndarray,
    directions: np.ndarray,
    near: ArrayLike,
    far: ArrayLike,
    samples: int,
    rng: np.random.Generator,
    codes: Optional[Node] = None,
) -> Tuple[RenderResult, TwoPassInfo]:
    """
    Two-pass rendering without a depth prior.

    The first half of the samples is stratified and rendered to a depth and std estimate;
    the second half is drawn from N(depth, max(std, bin width)^2). Rays whose first pass
    finds no surface get a stratified second half. Each sample is queried once, so the
    field sees exactly `samples` queries per ray.
    """
    if samples < 2:
        raise ValueError(f"render_two_pass: need at least 2 samples per ray, got {samples}")
    rays = origins.shape[0]
    first_count = samples - samples // 2
    second_count = samples // 2
    near_arr = np.broadcast_to(np.asarray(near, dtype=np.float64), (rays,))
    far_arr = np.broadcast_to(np.asarray(far, dtype=np.float64), (rays,))

    t_first = stratified_sample(near_arr, far_arr, first_count, rng)
    raw_first = query_along_rays(field, origins, directions, t_first, codes)
    estimate = composite(t_first, raw_first[1], raw_first[0], far_arr)

    depth = estimate.depth.value
    bin_width = (far_arr - near_arr) / first_count
    std = np.maximum(estimate.std.value, bin_width)
    fallback = estimate.opacity.value < FALLBACK_OPACITY

    t_second = gaussian_samples(depth, std, near_arr, far_arr, second_count, rng)
    if np.any(fallback):
        t_second[fallback] = stratified_sample(near_arr[fallback], far_arr[fallback], second_count, rng)
    raw_second = query_along_rays(field, origins, directions, t_second, codes)

    t, rgb, sigma = _merge_queries(t_first, raw_first, t_second, raw_second, near_arr, far_arr)
    info = TwoPassInfo(pass_one_depth=depth, pass_one_std=std, fallback=fallback, samples=t_second)
    return composite(t, sigma, rgb, far_arr), info


def render_pixel_test_time(
    field: FieldMLP, ray: Ray, code: Optional[np.ndarray], samples: int, seed: int
) -> RenderResult:
    """Render one ray with the two-pass sampler; `code` of None means the zero code."""
    codes = None
    if field.latent_size > 0:
        vector = np.zeros(field.latent_size) if code is None else np.asarray(code, dtype=np.float64)
        codes = ad.lift(vector.reshape(1, -1))
    result, _ = render_two_pass(
        field,
        ray.origin.reshape(1, 3),
        ray.direction.reshape(1, 3),
        ray.near,
        ray.far,
        samples,
        np.random.default_rng(seed),
        codes,
    )
    return result


def render_image(
    field: FieldMLP,
    intr: Intrinsics,
    pose: Pose,
    near: float,
    far: float,
    samples: int,
    seed: int,
    code: Optional[np.ndarray] = None,
    chunk_size: int = 2048,
) -> Dict[str, np.ndarray]:
    """
    Render a full view with the two-pass sampler, chunk by chunk and without gradients.

    Returns:
        Mapping with "rgb" (H, W, 3), "depth", "std" and "opacity" (H, W)
    """
    logger = get_pipeline_logger("render")
    origins, directions = image_rays(intr, pose)
    origins = origins.reshape(-1, 3)
    directions = directions.reshape(-1, 3)
    count = len(origins)
    vector = None
    if field.latent_size > 0:
        vector = np.zeros(field.latent_size) if code is None else np.asarray(code, dtype=np.float64)

    outputs = {"rgb": [], "depth": [], "std": [], "opacity": []}
    fallbacks = 0
    with ad.no_grad():
        for chunk, start in enumerate(range(0, count, chunk_size)):
            stop = min(start + chunk_size, count)
            codes = None if vector is None else ad.lift(np.tile(vector, (stop - start, 1)))
            rng = np.random.default_rng([seed, chunk])
            result, info = render_two_pass(
                field, origins[start:stop], directions[start:stop], near, far, samples, rng, codes
            )
            outputs["rgb"].append(result.color.value)
            outputs["depth"].append(result.depth.value)
            outputs["std"].append(result.std.value)
            outputs["opacity"].append(result.opacity.value)
            fallbacks += int(info.fallback.sum())

    logger.debug("Rendered view", pixels=count, fallback_rays=fallbacks)
    shape = (intr.height, intr.width)
    return {
        "rgb": np.concatenate(outputs["rgb"]).reshape(shape + (3,)),
        "depth": np.concatenate(outputs["depth"]).reshape(shape),
        "std": np.concatenate(outputs["std"]).reshape(shape),
        "opacity": np.concatenate(outputs["opacity"]).reshape(shape),
    }
