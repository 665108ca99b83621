"""
Scene synthesis and sparse depth simulation jobs.
"""

from typing import Any, Dict, Optional

import numpy as np
import yaml

from src.config.settings import Settings
from src.scene.geometry import generate_scene
from src.scene.overlap import overlap_statistics
from src.scene.render import SceneDataset, render_dataset
from src.sparse.noise import NoiseModel, resolve_noise_model
from src.sparse.projection import simulate_sparse_depth, sparse_depth_rmse
from src.utils.logging_setup import get_pipeline_logger
from src.utils.storage import ArtifactStore

NOISE_FILE = "noise.yaml"
SUMMARY_FILE = "summary.yaml"


def generate_scene_job(settings: Settings, store: ArtifactStore) -> Dict[str, Any]:
    """Generate the room, render both splits and record view-overlap statistics."""
    logger = get_pipeline_logger("generate_scene")
    scene = generate_scene(settings.scene.seed, settings.scene)
    dataset = render_dataset(scene, settings.scene)
    store.save_dataset(dataset)

    stats = overlap_statistics(dataset.train, dataset.test)
    summary = {
        "seed": settings.scene.seed,
        "objects": len(scene.objects),
        "train_views": len(dataset.train),
        "test_views": len(dataset.test),
        "near": dataset.train.near,
        "far": dataset.train.far,
        "seen_by_none": stats.seen_by_none,
        "seen_by_one": stats.seen_by_one,
        "seen_by_many": stats.seen_by_many,
        "test_overlap": [float(v) for v in stats.test_overlap],
    }
    with open(store.path("overlap.yaml"), "w") as handle:
        yaml.safe_dump(summary, handle, sort_keys=False)

    logger.info("Generated scene", **{k: v for k, v in summary.items() if k != "test_overlap"})
    return summary


def load_noise_model(store: ArtifactStore, tag: str) -> NoiseModel:
    path = store.require(store.path("sparse", tag, NOISE_FILE), "simulate-sparse")
    with open(path) as handle:
        data = yaml.safe_load(handle)
    return NoiseModel(float(data["a0"]), float(data["a1"]), float(data["a2"]))


def simulate_sparse_job(
    settings: Settings,
    store: ArtifactStore,
    tag: str = "sfm",
    density: Optional[float] = None,
    dataset: Optional[SceneDataset] = None,
) -> Dict[str, Any]:
    """
    Simulate SfM-like sparse depth for the training views and store the maps.

    Args:
        settings: Sparse simulation settings
        store: Run directory
        tag: Name of the sparse map set
        density: Override of the density target
        dataset: Already loaded dataset (loaded from the store when omitted)

    Returns:
        Summary with the noise model, counts and sparse RMSE
    """
    logger = get_pipeline_logger("simulate_sparse")
    config = settings.sparse
    density = config.density if density is None else density
    views = (dataset or store.load_dataset()).train

    rng = np.random.default_rng([config.seed, 3])
    model = resolve_noise_model(
        views, config.noise_coefficients, rng, config.calibration_pixel_sigma, config.calibration_bins
    )
    simulation = simulate_sparse_depth(
        views,
        model,
        seed=config.seed,
        outlier_rate=config.outlier_rate,
        density_target=density,
        budget_factor=config.keypoint_budget_factor,
        occlusion_tolerance=config.occlusion_tolerance,
        augment=config.augment_to_target,
    )
    store.save_sparse(tag, simulation.maps)

    a0, a1, a2 = model.as_tuple()
    with open(store.path("sparse", tag, NOISE_FILE), "w") as handle:
        yaml.safe_dump({"a0": a0, "a1": a1, "a2": a2}, handle, sort_keys=False)

    rmse = sparse_depth_rmse(simulation.maps, views.depths) if (simulation.maps > 0).any() else float("nan")
    summary = {
        "tag": tag,
        "density": float(density),
        "target_count": int(simulation.target_count),
        "valid_counts": [int(c) for c in simulation.valid_counts],
        "shortfall": [int(s) for s in simulation.shortfall],
        "outliers": int(sum(p.is_outlier for p in simulation.points)),
        "sparse_rmse": float(rmse),
        "noise": {"a0": a0, "a1": a1, "a2": a2},
    }
    with open(store.path("sparse", tag, SUMMARY_FILE), "w") as handle:
        yaml.safe_dump(summary, handle, sort_keys=False)

    logger.info(
        "Simulated sparse depth",
        tag=tag,
        density=density,
        mean_valid=float(np.mean(simulation.valid_counts)),
        shortfall=int(sum(simulation.shortfall)),
        sparse_rmse=summary["sparse_rmse"],
    )
    return summary
