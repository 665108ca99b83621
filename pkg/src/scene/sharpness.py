"""
Frame sharpness via the variance of the Laplacian, and sharpest-frame selection.
"""

from typing import List, Sequence

import numpy as np
from scipy.signal import convolve2d

LAPLACIAN = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])
LUMA = np.array([0.299, 0.587, 0.114])


def to_gray(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        return image
    if image.ndim == 3 and image.shape[-1] == 3:
        return image @ LUMA
    raise ValueError(f"expected an H x W or H x W x 3 image, got shape {image.shape}")


def sharpness_score(image: np.ndarray) -> float:
    """Variance of the 3x3 Laplacian response over the valid region of the grayscale image."""
    gray = to_gray(image)
    if gray.shape[0] < 3 or gray.shape[1] < 3:
        raise ValueError(f"image {gray.shape} is smaller than the 3x3 Laplacian kernel")
    return float(np.var(convolve2d(gray, LAPLACIAN, mode="valid")))


def select_sharpest(frames: Sequence[np.ndarray], window: int) -> List[int]:
    """
    Pick the sharpest frame from each full window of `window` consecutive frames.
    A trailing partial window is dropped; ties go to the lowest index.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    selected: List[int] = []
    for start in range(0, len(frames) - window + 1, window):
        scores = [sharpness_score(frames[i]) for i in range(start, start + window)]
        selected.append(start + int(np.argmax(scores)))
    return selected
