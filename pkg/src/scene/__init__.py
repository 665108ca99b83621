# Synthetic room scenes with analytic ground truth
from src.scene.camera import Intrinsics, Pose, Ray, image_rays, pixel_ray, project_points
from src.scene.geometry import PlacementError, SceneGeometry, generate_scene
from src.scene.render import CameraViews, SceneDataset, render_dataset, render_view, trace_ground_truth
from src.scene.sharpness import select_sharpest, sharpness_score

__all__ = [
    "CameraViews",
    "Intrinsics",
    "PlacementError",
    "Pose",
    "Ray",
    "SceneDataset",
    "SceneGeometry",
    "generate_scene",
    "image_rays",
    "pixel_ray",
    "project_points",
    "render_dataset",
    "render_view",
    "select_sharpest",
    "sharpness_score",
    "trace_ground_truth",
]
