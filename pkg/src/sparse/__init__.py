# SfM-like sparse depth simulation
from src.sparse.keypoints import detect_keypoints, gradient_magnitude
from src.sparse.noise import NoiseModel, calibrate_noise_model, fit_noise_model, perturb_depths, resolve_noise_model
from src.sparse.projection import (
    SparsePoint,
    SparseSimulation,
    perturb_and_project,
    simulate_sparse_depth,
    sparse_depth_rmse,
    target_count,
)

__all__ = [
    "NoiseModel",
    "SparsePoint",
    "SparseSimulation",
    "calibrate_noise_model",
    "detect_keypoints",
    "fit_noise_model",
    "gradient_magnitude",
    "perturb_and_project",
    "perturb_depths",
    "resolve_noise_model",
    "simulate_sparse_depth",
    "sparse_depth_rmse",
    "target_count",
]
