"""
3D-consistent sparse depth maps.

Every keypoint becomes a track: its sensor depth is perturbed once, the perturbed world
point is projected into every view in which the true surface point is visible, and the
observed depth there is the distance to the perturbed point. Per-view maps are thinned
to the density target afterwards, or topped up with single-view points on unobserved
pixels when the tracks fall short.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from src.scene.camera import pixel_directions, project_points
from src.scene.render import CameraViews
from src.sparse.keypoints import detect_keypoints
from src.sparse.noise import NoiseModel, perturb_depths
from src.utils.logging_setup import get_pipeline_logger


@dataclass
class SparsePoint:
    """One observation of a track in one view."""
    view: int
    px: float
    py: float
    z_true: float
    z: float
    world_point: np.ndarray
    track: int
    is_outlier: bool = False


@dataclass
class SparseSimulation:
    maps: np.ndarray                              # (N, H, W), 0 = invalid
    points: List[SparsePoint] = field(default_factory=list)
    valid_counts: List[int] = field(default_factory=list)
    shortfall: List[int] = field(default_factory=list)
    target_count: int = 0


def target_count(density: float, height: int, width: int) -> int:
    """Valid pixels per map for a density target (at least one)."""
    return max(1, int(round(density * height * width)))


def perturb_and_project(
    views: CameraViews,
    keypoints: Sequence[np.ndarray],
    model: NoiseModel,
    seed: int,
    outlier_rate: float,
    density_target: float,
    occlusion_tolerance: float = 0.01,
    augment: bool = True,
) -> SparseSimulation:
    """
    Simulate SfM-like sparse depth for every view.

    Args:
        views: Cameras and ground-truth depth
        keypoints: Per view (M, 2) integer (x, y) pixels
        model: Depth noise model
        seed: Random seed
        outlier_rate: Fraction of tracks replaced by a uniform depth in [near, far]
        density_target: Fraction of valid pixels per map
        occlusion_tolerance: Relative depth tolerance of the visibility test
        augment: Top up maps below the target with single-view points on unobserved pixels

    Returns:
        Sparse maps plus per-observation records and per-view shortfall
    """
    if not 0.0 < density_target < 1.0:
        raise ValueError(f"density_target must be in (0, 1), got {density_target}")
    if not 0.0 <= outlier_rate < 1.0:
        raise ValueError(f"outlier_rate must be in [0, 1), got {outlier_rate}")
    if len(keypoints) != len(views):
        raise ValueError(f"got keypoints for {len(keypoints)} views, expected {len(views)}")

    logger = get_pipeline_logger("sparse")
    rng = np.random.default_rng(seed)
    intr = views.intrinsics
    height, width = intr.height, intr.width
    near, far = views.near, views.far

    # tracks: true and perturbed world points
    true_points, noisy_points, outliers, sources = [], [], [], []
    for view, pixels in enumerate(keypoints):
        pixels = np.asarray(pixels, dtype=np.int64).reshape(-1, 2)
        if len(pixels) == 0:
            continue
        z_true = views.depths[view][pixels[:, 1], pixels[:, 0]]
        keep = z_true > 0
        pixels, z_true = pixels[keep], z_true[keep]
        pose = views.poses[view]
        directions = pixel_directions(intr, pose, pixels[:, 0] + 0.5, pixels[:, 1] + 0.5)
        z = np.clip(perturb_depths(z_true, model, rng), near, far)
        is_outlier = rng.uniform(size=len(z)) < outlier_rate
        z = np.where(is_outlier, rng.uniform(near, far, size=len(z)), z)
        true_points.append(pose.translation + z_true[:, None] * directions)
        noisy_points.append(pose.translation + z[:, None] * directions)
        outliers.append(is_outlier)
        sources.append(np.full(len(z), view))

    if true_points:
        true_points_all = np.concatenate(true_points)
        noisy_points_all = np.concatenate(noisy_points)
        outlier_all = np.concatenate(outliers)
    else:
        true_points_all = noisy_points_all = np.zeros((0, 3))
        outlier_all = np.zeros(0, dtype=bool)

    count = target_count(density_target, height, width)
    next_track = len(true_points_all)
    maps = np.zeros((len(views), height, width))
    points: List[SparsePoint] = []
    valid_counts: List[int] = []
    shortfall: List[int] = []

    for view in range(len(views)):
        pose = views.poses[view]
        true_pixels, true_distance, true_front = project_points(intr, pose, true_points_all)
        cols = np.clip(np.floor(true_pixels[:, 0]).astype(int), 0, width - 1)
        rows = np.clip(np.floor(true_pixels[:, 1]).astype(int), 0, height - 1)
        in_frame = (
            true_front
            & (true_pixels[:, 0] >= 0) & (true_pixels[:, 0] < width)
            & (true_pixels[:, 1] >= 0) & (true_pixels[:, 1] < height)
        )
        reference = views.depths[view][rows, cols]
        visible = in_frame & (reference > 0) & (np.abs(true_distance - reference) <= occlusion_tolerance * reference)

        noisy_pixels, noisy_distance, noisy_front = project_points(intr, pose, noisy_points_all)
        lands = (
            noisy_front
            & (noisy_pixels[:, 0] >= 0) & (noisy_pixels[:, 0] < width)
            & (noisy_pixels[:, 1] >= 0) & (noisy_pixels[:, 1] < height)
        )
        candidates = np.nonzero(visible & lands)[0]

        # nearest observation wins each pixel
        observed = np.clip(noisy_distance[candidates], near, far)
        obs_cols = np.floor(noisy_pixels[candidates, 0]).astype(int)
        obs_rows = np.floor(noisy_pixels[candidates, 1]).astype(int)
        order = np.lexsort((candidates, observed, obs_rows * width + obs_cols))
        flat = (obs_rows * width + obs_cols)[order]
        first = np.ones(len(order), dtype=bool)
        first[1:] = flat[1:] != flat[:-1]
        winners = order[first]

        if len(winners) > count:
            winners = np.sort(rng.choice(winners, size=count, replace=False))

        for k in winners:
            track = int(candidates[k])
            maps[view, obs_rows[k], obs_cols[k]] = observed[k]
            points.append(SparsePoint(
                view=view,
                px=float(noisy_pixels[track, 0]),
                py=float(noisy_pixels[track, 1]),
                z_true=float(true_distance[track]),
                z=float(observed[k]),
                world_point=noisy_points_all[track].copy(),
                track=track,
                is_outlier=bool(outlier_all[track]),
            ))

        added = 0
        if augment and len(winners) < count:
            added = _augment_view(
                views, view, maps, points, count - len(winners), model, rng, outlier_rate, next_track
            )
            next_track += added
        valid = len(winners) + added
        deficit = count - valid
        if deficit:
            logger.warning(
                "Sparse density target not reached",
                view=view,
                target=count,
                valid=valid,
                shortfall=deficit,
            )
        valid_counts.append(int(valid))
        shortfall.append(int(deficit))

    logger.info(
        "Simulated sparse depth",
        views=len(views),
        tracks=len(true_points_all),
        target_per_view=count,
        mean_valid=round(float(np.mean(valid_counts)) if valid_counts else 0.0, 2),
        outliers=int(outlier_all.sum()),
    )
    return SparseSimulation(maps=maps, points=points, valid_counts=valid_counts, shortfall=shortfall, target_count=count)


def _augment_view(
    views: CameraViews,
    view: int,
    maps: np.ndarray,
    points: List[SparsePoint],
    needed: int,
    model: NoiseModel,
    rng: np.random.Generator,
    outlier_rate: float,
    first_track: int,
) -> int:
    """Add up to `needed` single-view observations on empty pixels with surface depth."""
    intr = views.intrinsics
    pose = views.poses[view]
    free = np.flatnonzero((views.depths[view] > 0).reshape(-1) & (maps[view] == 0).reshape(-1))
    if free.size == 0:
        return 0
    picks = np.sort(rng.choice(free, size=min(needed, free.size), replace=False))
    rows, cols = np.divmod(picks, intr.width)
    z_true = views.depths[view][rows, cols]
    z = np.clip(perturb_depths(z_true, model, rng), views.near, views.far)
    is_outlier = rng.uniform(size=len(z)) < outlier_rate
    z = np.where(is_outlier, rng.uniform(views.near, views.far, size=len(z)), z)
    px, py = cols + 0.5, rows + 0.5
    directions = pixel_directions(intr, pose, px, py)
    for k in range(len(picks)):
        maps[view, rows[k], cols[k]] = z[k]
        points.append(SparsePoint(
            view=view,
            px=float(px[k]),
            py=float(py[k]),
            z_true=float(z_true[k]),
            z=float(z[k]),
            world_point=pose.translation + z[k] * directions[k],
            track=first_track + k,
            is_outlier=bool(is_outlier[k]),
        ))
    return len(picks)


def simulate_sparse_depth(
    views: CameraViews,
    model: NoiseModel,
    seed: int,
    outlier_rate: float,
    density_target: float,
    budget_factor: float = 4.0,
    occlusion_tolerance: float = 0.01,
    keypoints: Optional[Sequence[np.ndarray]] = None,
    augment: bool = True,
) -> SparseSimulation:
    """Detect keypoints in every view, then perturb and project them."""
    if keypoints is None:
        budget = int(np.ceil(budget_factor * target_count(density_target, *views.shape)))
        keypoints = [detect_keypoints(image, budget) for image in views.images]
    return perturb_and_project(
        views, keypoints, model, seed, outlier_rate, density_target, occlusion_tolerance, augment
    )


def sparse_depth_rmse(sparse: np.ndarray, gt: np.ndarray) -> float:
    """RMSE over valid (non-zero) sparse pixels."""
    sparse = np.asarray(sparse, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if sparse.shape != gt.shape:
        raise ValueError(f"sparse_depth_rmse: shapes differ {sparse.shape} vs {gt.shape}")
    valid = sparse > 0
    if not valid.any():
        raise ValueError("sparse_depth_rmse: no valid sparse pixels")
    return float(np.sqrt(np.mean((sparse[valid] - gt[valid]) ** 2)))
