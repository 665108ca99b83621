"""
Image and depth quality metrics.
"""

from typing import Dict, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter

from src.scene.camera import image_rays, project_points
from src.scene.overlap import visible_mask
from src.scene.render import CameraViews
from src.scene.sharpness import to_gray

SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_SIGMA = 1.5

# Anchor colors of the depth-error colormap, low to high error.
_ERROR_COLORS = np.array([
    [0.267, 0.005, 0.329],
    [0.230, 0.322, 0.546],
    [0.128, 0.567, 0.551],
    [0.370, 0.789, 0.383],
    [0.993, 0.906, 0.144],
])


def psnr(rendered: np.ndarray, reference: np.ndarray) -> float:
    """PSNR in dB for unit peak; identical images give +inf."""
    rendered = np.asarray(rendered, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if rendered.shape != reference.shape:
        raise ValueError(f"psnr: shapes differ {rendered.shape} vs {reference.shape}")
    mse = float(np.mean((rendered - reference) ** 2))
    if mse == 0.0:
        return float("inf")
    return -10.0 * float(np.log10(mse))


def ssim(rendered: np.ndarray, reference: np.ndarray, window: int = 11) -> float:
    """
    Mean structural similarity of the grayscale images.

    Gaussian-weighted local statistics (sigma 1.5, window x window support), data range 1,
    population covariance; the half-window border is excluded from the mean.
    """
    a = to_gray(rendered)
    b = to_gray(reference)
    if a.shape != b.shape:
        raise ValueError(f"ssim: shapes differ {a.shape} vs {b.shape}")
    if min(a.shape) < window:
        raise ValueError(f"ssim: window {window} larger than image {a.shape}")

    radius = (window - 1) // 2
    truncate = radius / SSIM_SIGMA

    def blur(x: np.ndarray) -> np.ndarray:
        return gaussian_filter(x, sigma=SSIM_SIGMA, truncate=truncate, mode="reflect")

    mu_a, mu_b = blur(a), blur(b)
    var_a = blur(a * a) - mu_a * mu_a
    var_b = blur(b * b) - mu_b * mu_b
    cov = blur(a * b) - mu_a * mu_b
    c1 = SSIM_K1 ** 2
    c2 = SSIM_K2 ** 2
    score = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))
    return float(score[radius:-radius or None, radius:-radius or None].mean())


def depth_rmse(rendered: np.ndarray, reference: np.ndarray) -> float:
    """RMSE over pixels with valid (positive) reference depth."""
    rendered = np.asarray(rendered, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if rendered.shape != reference.shape:
        raise ValueError(f"depth_rmse: shapes differ {rendered.shape} vs {reference.shape}")
    valid = reference > 0
    if not valid.any():
        return float("nan")
    return float(np.sqrt(np.mean((rendered[valid] - reference[valid]) ** 2)))


def colorize(values: np.ndarray, vmax: float) -> np.ndarray:
    """Map values in [0, vmax] to RGB with a fixed perceptual ramp; larger values saturate."""
    scaled = np.clip(np.asarray(values, dtype=np.float64) / vmax, 0.0, 1.0)
    anchors = np.linspace(0.0, 1.0, len(_ERROR_COLORS))
    return np.stack([np.interp(scaled, anchors, _ERROR_COLORS[:, c]) for c in range(3)], axis=-1)


def depth_error_image(rendered: np.ndarray, reference: np.ndarray, scale: float = 0.5) -> np.ndarray:
    """Color-mapped absolute depth error on a fixed 0..scale meter range; invalid pixels black."""
    error = np.abs(np.asarray(rendered) - np.asarray(reference))
    image = colorize(error, scale)
    image[np.asarray(reference) <= 0] = 0.0
    return image


def inter_view_color_variance(views: CameraViews, images: Sequence[np.ndarray], tolerance: float = 0.01) -> float:
    """
    Seam strength between views: for every ordered pair of overlapping views, the
    difference of mean colors over their shared surface region; returns the mean squared
    difference over pairs (0 when no pair overlaps).
    """
    intr = views.intrinsics
    squared = []
    for i in range(len(views)):
        origins, directions = image_rays(intr, views.poses[i])
        valid = views.depths[i].reshape(-1) > 0
        points = (origins + views.depths[i][..., None] * directions).reshape(-1, 3)[valid]
        colors_i = np.asarray(images[i]).reshape(-1, 3)[valid]
        for j in range(len(views)):
            if j == i:
                continue
            seen = visible_mask(views, j, points, tolerance)
            if seen.sum() < 16:
                continue
            pixels, _, _ = project_points(intr, views.poses[j], points[seen])
            cols = np.clip(np.floor(pixels[:, 0]).astype(int), 0, intr.width - 1)
            rows = np.clip(np.floor(pixels[:, 1]).astype(int), 0, intr.height - 1)
            colors_j = np.asarray(images[j])[rows, cols]
            difference = colors_i[seen].mean(axis=0) - colors_j.mean(axis=0)
            squared.append(float(np.mean(difference ** 2)))
    return float(np.mean(squared)) if squared else 0.0


def appearance_seam_variance(views: CameraViews, renders: Sequence[np.ndarray], tolerance: float = 0.01) -> float:
    """
    Seam strength of the per-view appearance the model leaves unexplained: the inter-view
    color variance of render minus ground truth. Offsets absorbed by per-view codes cancel.
    """
    residuals = [np.asarray(render) - views.images[i] for i, render in enumerate(renders)]
    return inter_view_color_variance(views, residuals, tolerance)


def aggregate(rows: Sequence[Dict[str, float]], keys: Sequence[str]) -> Dict[str, float]:
    """Mean of each metric over rows; +inf PSNR rows keep the mean at +inf."""
    return {key: float(np.mean([row[key] for row in rows])) for key in keys}
