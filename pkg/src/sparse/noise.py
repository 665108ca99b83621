"""
Depth-dependent noise of SfM-like sparse depth.

The standard deviation follows s(z) = a0 + a1 z + a2 z^2. Coefficients are fitted to
per-depth-bin deviations, either of supplied (z_true, z_observed) pairs or of a
two-view triangulation simulation on the scene itself.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.scene.camera import pixel_directions, project_points
from src.scene.render import CameraViews
from src.utils.logging_setup import get_pipeline_logger

MIN_POPULATED_BINS = 3
MIN_BIN_COUNT = 5


@dataclass(frozen=True)
class NoiseModel:
    a0: float
    a1: float
    a2: float

    def sigma(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        return self.a0 + self.a1 * z + self.a2 * z * z

    def check_positive(self, near: float, far: float, samples: int = 256) -> None:
        """Raise ValueError unless s(z) > 0 over [near, far]."""
        z = np.linspace(near, far, samples)
        if np.any(self.sigma(z) <= 0):
            raise ValueError(
                f"noise model ({self.a0:.4g}, {self.a1:.4g}, {self.a2:.4g}) is not positive on [{near}, {far}]"
            )

    def as_tuple(self) -> Tuple[float, float, float]:
        return self.a0, self.a1, self.a2


def fit_noise_model(z_true: np.ndarray, z_observed: np.ndarray, bins: int = 10) -> NoiseModel:
    """
    Least-squares quadratic through the per-bin standard deviation of z_observed - z_true.

    Bins split the z_true range evenly; bins with fewer than MIN_BIN_COUNT pairs are
    skipped and each populated bin is weighted by the precision of its std estimate.

    Args:
        z_true: True depths
        z_observed: Observed depths, same shape
        bins: Number of depth bins

    Returns:
        Fitted noise model
    """
    z_true = np.asarray(z_true, dtype=np.float64).reshape(-1)
    z_observed = np.asarray(z_observed, dtype=np.float64).reshape(-1)
    if z_true.shape != z_observed.shape:
        raise ValueError(f"fit_noise_model: {z_true.shape} true vs {z_observed.shape} observed depths")
    if z_true.size == 0:
        raise ValueError("fit_noise_model: no depth pairs")

    residual = z_observed - z_true
    edges = np.linspace(z_true.min(), z_true.max(), bins + 1)
    which = np.clip(np.digitize(z_true, edges[1:-1]), 0, bins - 1)

    centers: List[float] = []
    stds: List[float] = []
    counts: List[int] = []
    for b in range(bins):
        mask = which == b
        if mask.sum() < MIN_BIN_COUNT:
            continue
        centers.append(float(z_true[mask].mean()))
        stds.append(float(np.std(residual[mask])))
        counts.append(int(mask.sum()))

    if len(centers) < MIN_POPULATED_BINS:
        raise ValueError(
            f"fit_noise_model: {len(centers)} populated depth bins, need at least {MIN_POPULATED_BINS}"
        )
    x = np.asarray(centers)
    y = np.asarray(stds)
    # std of a sample std is about s / sqrt(2n); floor keeps noiseless bins finite
    weights = np.sqrt(2.0 * np.asarray(counts)) / np.maximum(y, 1e-9 + 1e-6 * y.max())
    design = np.stack([np.ones_like(x), x, x * x], axis=-1)
    if np.linalg.matrix_rank(design) < 3:
        raise ValueError("fit_noise_model: degenerate depth bins (need three distinct bin centres)")
    a2, a1, a0 = np.polyfit(x, y, deg=2, w=weights)
    return NoiseModel(float(a0), float(a1), float(a2))


def perturb_depths(z_true: np.ndarray, model: NoiseModel, rng: np.random.Generator) -> np.ndarray:
    """Draw z ~ N(z_true, s(z_true)^2)."""
    z_true = np.asarray(z_true, dtype=np.float64)
    sigma = np.maximum(model.sigma(z_true), 0.0)
    return z_true + sigma * rng.standard_normal(z_true.shape)


def triangulate_midpoint(
    o1: np.ndarray, d1: np.ndarray, o2: np.ndarray, d2: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Midpoint of the closest approach of ray pairs; returns points and a validity mask."""
    w0 = o1 - o2
    b = np.einsum("ij,ij->i", d1, d2)
    d = np.einsum("ij,ij->i", d1, w0)
    e = np.einsum("ij,ij->i", d2, w0)
    denom = 1.0 - b * b
    safe = np.where(denom > 1e-6, denom, 1.0)
    s = (b * e - d) / safe
    t = (e - b * d) / safe
    points = 0.5 * (o1 + s[:, None] * d1 + o2 + t[:, None] * d2)
    return points, (denom > 1e-6) & (s > 0) & (t > 0)


def calibrate_noise_model(
    views: CameraViews,
    rng: np.random.Generator,
    pixel_sigma: float = 0.5,
    bins: int = 10,
    samples_per_pair: int = 400,
    tolerance: float = 0.01,
) -> NoiseModel:
    """
    Fit a noise model to two-view triangulation errors on the scene itself.

    For each pair of training views, random pixels of the first view are matched to
    their true projections in the second; both observations get Gaussian pixel noise and
    the triangulated distance is compared against the true depth.
    """
    logger = get_pipeline_logger("noise")
    intr = views.intrinsics
    z_true_all: List[np.ndarray] = []
    z_obs_all: List[np.ndarray] = []

    for i in range(len(views)):
        for j in range(len(views)):
            if i == j:
                continue
            xs = rng.integers(0, intr.width, samples_per_pair)
            ys = rng.integers(0, intr.height, samples_per_pair)
            depth = views.depths[i][ys, xs]
            keep = depth > 0
            xs, ys, depth = xs[keep], ys[keep], depth[keep]
            pose_i, pose_j = views.poses[i], views.poses[j]
            points = pose_i.translation + depth[:, None] * pixel_directions(intr, pose_i, xs + 0.5, ys + 0.5)

            pixels, distance, in_front = project_points(intr, pose_j, points)
            inside = in_front & (pixels[:, 0] >= 0) & (pixels[:, 0] < intr.width) & (pixels[:, 1] >= 0) & (pixels[:, 1] < intr.height)
            cols = np.clip(np.floor(pixels[:, 0]).astype(int), 0, intr.width - 1)
            rows = np.clip(np.floor(pixels[:, 1]).astype(int), 0, intr.height - 1)
            reference = views.depths[j][rows, cols]
            visible = inside & (np.abs(distance - reference) <= tolerance * reference)
            if not visible.any():
                continue

            noisy_i = np.stack([xs + 0.5, ys + 0.5], axis=-1)[visible] + pixel_sigma * rng.standard_normal((visible.sum(), 2))
            noisy_j = pixels[visible] + pixel_sigma * rng.standard_normal((visible.sum(), 2))
            d1 = pixel_directions(intr, pose_i, noisy_i[:, 0], noisy_i[:, 1])
            d2 = pixel_directions(intr, pose_j, noisy_j[:, 0], noisy_j[:, 1])
            o1 = np.broadcast_to(pose_i.translation, d1.shape)
            o2 = np.broadcast_to(pose_j.translation, d2.shape)
            triangulated, ok = triangulate_midpoint(o1, d1, o2, d2)
            observed = np.linalg.norm(triangulated - pose_i.translation, axis=-1)
            z_true_all.append(depth[visible][ok])
            z_obs_all.append(observed[ok])

    if not z_true_all:
        raise ValueError("calibrate_noise_model: no overlapping view pairs")
    z_true = np.concatenate(z_true_all)
    z_obs = np.concatenate(z_obs_all)
    # gross triangulation failures from near-parallel rays are outliers, not noise
    keep = np.abs(z_obs - z_true) < 0.5 * z_true
    model = fit_noise_model(z_true[keep], z_obs[keep], bins=bins)
    logger.info(
        "Calibrated sparse depth noise",
        pairs=int(keep.sum()),
        a0=round(model.a0, 6),
        a1=round(model.a1, 6),
        a2=round(model.a2, 6),
    )
    return model


def resolve_noise_model(
    views: CameraViews,
    coefficients: Optional[Sequence[float]],
    rng: np.random.Generator,
    pixel_sigma: float = 0.5,
    bins: int = 10,
) -> NoiseModel:
    """Configured coefficients when given, otherwise self-calibration; checked positive on [near, far]."""
    if coefficients is not None:
        model = NoiseModel(*(float(c) for c in coefficients))
    else:
        model = calibrate_noise_model(views, rng, pixel_sigma=pixel_sigma, bins=bins)
        lowest = float(np.min(model.sigma(np.linspace(views.near, views.far, 256))))
        if lowest <= 0:
            # quadratic fits can dip below zero outside the sampled depth range
            model = NoiseModel(model.a0 - lowest + 1e-4, model.a1, model.a2)
    model.check_positive(views.near, views.far)
    return model
