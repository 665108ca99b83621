"""
View-overlap statistics of a camera set.

A pixel of view i is observed by view j when its ground-truth surface point projects
inside view j and passes the z-test against view j's depth map.
"""

from dataclasses import dataclass
from typing import List

import numpy as np

from src.scene.camera import image_rays, project_points
from src.scene.render import CameraViews


@dataclass
class OverlapStats:
    """Fractions of training pixels seen by 0, 1 and >= 2 other training views."""
    seen_by_none: float
    seen_by_one: float
    seen_by_many: float
    test_overlap: List[float]         # per test view: overlap with its best training view


def surface_points(views: CameraViews, index: int) -> np.ndarray:
    origins, directions = image_rays(views.intrinsics, views.poses[index])
    return (origins + views.depths[index][..., None] * directions).reshape(-1, 3)


def visible_mask(views: CameraViews, index: int, points: np.ndarray, tolerance: float = 0.01) -> np.ndarray:
    """Which world points are visible (in frustum and unoccluded) in view `index`."""
    intr = views.intrinsics
    pixels, distance, in_front = project_points(intr, views.poses[index], points)
    inside = (
        in_front
        & (pixels[:, 0] >= 0) & (pixels[:, 0] < intr.width)
        & (pixels[:, 1] >= 0) & (pixels[:, 1] < intr.height)
    )
    cols = np.clip(np.floor(pixels[:, 0]).astype(int), 0, intr.width - 1)
    rows = np.clip(np.floor(pixels[:, 1]).astype(int), 0, intr.height - 1)
    reference = views.depths[index][rows, cols]
    return inside & (reference > 0) & (distance <= reference * (1.0 + tolerance))


def pairwise_overlap(source: CameraViews, i: int, target: CameraViews, j: int, tolerance: float = 0.01) -> float:
    """Fraction of view i's pixels observed by view j."""
    points = surface_points(source, i)
    valid = source.depths[i].reshape(-1) > 0
    return float(np.mean(visible_mask(target, j, points[valid], tolerance))) if valid.any() else 0.0


def overlap_statistics(train: CameraViews, test: CameraViews, tolerance: float = 0.01) -> OverlapStats:
    counts = []
    for i in range(len(train)):
        points = surface_points(train, i)
        seen = np.zeros(len(points), dtype=np.int64)
        for j in range(len(train)):
            if j != i:
                seen += visible_mask(train, j, points, tolerance)
        counts.append(seen)
    counts_all = np.concatenate(counts) if counts else np.zeros(0, dtype=np.int64)
    total = max(len(counts_all), 1)

    test_overlap = [
        max((pairwise_overlap(test, t, train, j, tolerance) for j in range(len(train))), default=0.0)
        for t in range(len(test))
    ]
    return OverlapStats(
        seen_by_none=float(np.sum(counts_all == 0)) / total,
        seen_by_one=float(np.sum(counts_all == 1)) / total,
        seen_by_many=float(np.sum(counts_all >= 2)) / total,
        test_overlap=test_overlap,
    )
