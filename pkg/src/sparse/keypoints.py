"""
Feature-like keypoint locations: local maxima of the image gradient magnitude.
"""

import numpy as np
from scipy.ndimage import maximum_filter

from src.scene.sharpness import to_gray

# Responses below this fraction of the strongest one are ignored.
RELATIVE_THRESHOLD = 0.01


def gradient_magnitude(image: np.ndarray) -> np.ndarray:
    """Root of the summed squared forward and backward differences in x and y."""
    gray = to_gray(image)
    padded = np.pad(gray, 1, mode="edge")
    center = padded[1:-1, 1:-1]
    total = (
        (padded[1:-1, 2:] - center) ** 2
        + (center - padded[1:-1, :-2]) ** 2
        + (padded[2:, 1:-1] - center) ** 2
        + (center - padded[:-2, 1:-1]) ** 2
    )
    return np.sqrt(total)


def detect_keypoints(image: np.ndarray, budget: int) -> np.ndarray:
    """
    Up to `budget` pixels at local 3x3 maxima of the gradient magnitude.

    Args:
        image: H x W x 3 (or H x W) image
        budget: Maximum number of keypoints

    Returns:
        (M, 2) integer array of (x, y) pixel indices, strongest first; equal responses
        keep raster order
    """
    if budget < 0:
        raise ValueError(f"keypoint budget must be >= 0, got {budget}")
    magnitude = gradient_magnitude(image)
    peak = float(magnitude.max()) if magnitude.size else 0.0
    threshold = max(1e-8, RELATIVE_THRESHOLD * peak)
    is_peak = (magnitude == maximum_filter(magnitude, size=3, mode="constant", cval=0.0)) & (magnitude > threshold)
    rows, cols = np.nonzero(is_peak)
    response = magnitude[rows, cols]
    order = np.lexsort((cols, rows, -response))[:budget]
    return np.stack([cols[order], rows[order]], axis=-1).astype(np.int64).reshape(-1, 2)
