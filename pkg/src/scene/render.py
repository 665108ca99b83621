"""
Ground-truth rendering of analytic scenes and the inside-out camera rig.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from src.config.settings import SceneConfig
from src.scene.camera import Intrinsics, Pose, Ray, image_rays
from src.scene.geometry import SceneGeometry, rig_center
from src.utils.logging_setup import get_pipeline_logger


def trace_rays(scene: SceneGeometry, origins: np.ndarray, directions: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Shade (N, 3) rays.

    Returns:
        colors (N, 3) in [0, 1] and depths (N,) as distance along the ray; misses get
        color 0 and depth inf
    """
    depth, normals, surface = scene.intersect(origins, directions)
    hit = np.isfinite(depth)
    points = origins + np.where(hit, depth, 0.0)[:, None] * directions
    albedo = scene.surface_albedo(points, surface)
    shade = scene.lighting.shade(normals)
    colors = np.clip(albedo * shade[:, None], 0.0, 1.0)
    colors[~hit] = 0.0
    return colors, depth


def trace_ground_truth(scene: SceneGeometry, ray: Ray) -> Tuple[np.ndarray, float]:
    """Color and nearest-hit distance for a single ray (depth inf on miss)."""
    colors, depth = trace_rays(scene, ray.origin[None, :], ray.direction[None, :])
    return colors[0], float(depth[0])


def render_view(scene: SceneGeometry, intr: Intrinsics, pose: Pose) -> Tuple[np.ndarray, np.ndarray]:
    """
    Render an H x W x 3 image and H x W depth map through every pixel centre.
    Pixels whose ray leaves the scene get depth 0.
    """
    origins, directions = image_rays(intr, pose)
    colors, depth = trace_rays(scene, origins.reshape(-1, 3), directions.reshape(-1, 3))
    depth = np.where(np.isfinite(depth), depth, 0.0)
    return colors.reshape(intr.height, intr.width, 3), depth.reshape(intr.height, intr.width)


@dataclass
class CameraViews:
    """Images, ground-truth depth and cameras of one view split."""
    intrinsics: Intrinsics
    poses: List[Pose]
    images: np.ndarray                 # (N, H, W, 3)
    depths: np.ndarray                 # (N, H, W), ray distance
    near: float
    far: float
    gains: np.ndarray = field(default_factory=lambda: np.ones(0))

    def __len__(self) -> int:
        return len(self.poses)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.intrinsics.height, self.intrinsics.width


@dataclass
class SceneDataset:
    scene: SceneGeometry
    train: CameraViews
    test: CameraViews


def rig_poses(config: SceneConfig) -> Tuple[List[Pose], List[Pose]]:
    """
    Inside-out rig: cameras on a small horizontal circle around the room centre, each
    looking outward and slightly down. Test views are interleaved between training views.

    Returns:
        (train poses, test poses)
    """
    total = config.num_train_views + config.num_test_views
    if config.num_train_views < 1:
        raise ValueError("at least one training view is required")
    center = rig_center(config)

    test_slots = set()
    if config.num_test_views:
        stride = total / config.num_test_views
        test_slots = {int(np.floor(stride * (k + 0.5))) for k in range(config.num_test_views)}

    train: List[Pose] = []
    test: List[Pose] = []
    for slot in range(total):
        angle = 2.0 * np.pi * slot / total
        outward = np.array([np.cos(angle), 0.0, np.sin(angle)])
        eye = center + config.rig_radius * outward
        target = eye + outward + np.array([0.0, -0.25, 0.0])
        pose = Pose.look_at(eye, target)
        (test if slot in test_slots else train).append(pose)
    return train, test


def appearance_gains(rng: np.random.Generator, count: int, jitter: float) -> np.ndarray:
    """Per-view RGB gains in [1 - jitter, 1 + jitter] emulating white-balance drift."""
    if jitter <= 0:
        return np.ones((count, 3))
    return rng.uniform(1.0 - jitter, 1.0 + jitter, size=(count, 3))


def _render_split(
    scene: SceneGeometry,
    intr: Intrinsics,
    poses: List[Pose],
    gains: np.ndarray,
    near: float,
    far: float,
) -> CameraViews:
    images, depths = [], []
    for pose, gain in zip(poses, gains):
        image, depth = render_view(scene, intr, pose)
        images.append(np.clip(image * gain, 0.0, 1.0))
        depths.append(depth)
    height, width = intr.height, intr.width
    return CameraViews(
        intrinsics=intr,
        poses=list(poses),
        images=np.array(images).reshape(len(poses), height, width, 3),
        depths=np.array(depths).reshape(len(poses), height, width),
        near=near,
        far=far,
        gains=gains,
    )


def render_dataset(scene: SceneGeometry, config: Optional[SceneConfig] = None) -> SceneDataset:
    """
    Render training and test views of `scene` from the inside-out rig.

    Appearance gains are drawn from the scene seed for every view (all ones when
    `appearance_jitter` is 0).
    """
    logger = get_pipeline_logger("scene")
    config = config or SceneConfig()
    intr = Intrinsics.from_fov(config.image_width, config.image_height, config.fov_deg)
    far = config.far if config.far is not None else scene.diagonal
    train_poses, test_poses = rig_poses(config)

    rng = np.random.default_rng([scene.seed, 1])
    train_gains = appearance_gains(rng, len(train_poses), config.appearance_jitter)
    test_gains = appearance_gains(rng, len(test_poses), config.appearance_jitter)

    dataset = SceneDataset(
        scene=scene,
        train=_render_split(scene, intr, train_poses, train_gains, config.near, far),
        test=_render_split(scene, intr, test_poses, test_gains, config.near, far),
    )
    logger.info(
        "Rendered dataset",
        train_views=len(train_poses),
        test_views=len(test_poses),
        resolution=f"{config.image_width}x{config.image_height}",
        near=config.near,
        far=round(far, 4),
    )
    return dataset
