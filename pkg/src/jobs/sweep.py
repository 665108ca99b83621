"""
Experiment orchestration: method variants, the ablation study and the sparse density sweep.
"""

from dataclasses import replace
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd

from src.config.settings import ABLATIONS, Settings
from src.jobs.evaluate import MEAN_ROW, evaluate_views, training_seam_variance
from src.jobs.priors import export_priors_job
from src.jobs.simulate import simulate_sparse_job
from src.nerf.trainer import scene_bounds, train
from src.scene.render import SceneDataset
from src.utils.logging_setup import get_pipeline_logger
from src.utils.storage import ArtifactStore, write_metrics_table

ABLATION_COLUMNS = [
    "method", "psnr", "psnr_opt_code", "ssim", "depth_rmse", "seam_variance", "train_seam_variance",
]
DENSITY_COLUMNS = ["method", "density", "mean_points", "psnr", "ssim", "depth_rmse"]

COMPLETED_TAG = "completed"
SPARSE_ONLY_TAG = "sparse_only"


def prior_tag_for(ablation: str) -> str:
    return SPARSE_ONLY_TAG if ablation == "no_completion" else COMPLETED_TAG


def run_variant(
    settings: Settings,
    store: ArtifactStore,
    name: str,
    ablation: str,
    prior_tag: str,
    dataset: Optional[SceneDataset] = None,
    optimize_codes: bool = True,
    measure_train_seams: bool = True,
) -> Dict[str, Any]:
    """
    Train one method variant on the run's scene and evaluate it on the test views.

    Returns:
        Mean metrics over test views, with the method name and seam variance;
        train_seam_variance is filled in when measure_train_seams is set
    """
    logger = get_pipeline_logger("variant")
    variant = replace(settings, train=replace(settings.train, ablation=ablation))
    variant.validate()
    dataset = dataset or store.load_dataset()
    depths, stds = store.load_priors(prior_tag, len(dataset.train))

    logger.info("Running variant", name=name, ablation=ablation, priors=prior_tag)
    state = train(dataset.train, depths, stds, scene_bounds(dataset.scene.room_size), variant, store.nerf_dir(name))
    table = evaluate_views(
        state.field,
        dataset.test,
        variant.evaluation,
        variant.evaluation.samples_per_ray,
        store.eval_dir(name),
        optimize_codes=optimize_codes,
    )
    mean = table[table["view"] == MEAN_ROW].iloc[0].to_dict()
    row = {"method": name, **{k: float(v) for k, v in mean.items() if k != "view"}}
    row["seam_variance"] = float(table.attrs.get("seam_variance", 0.0))
    if measure_train_seams:
        row["train_seam_variance"] = training_seam_variance(
            state.field, dataset.train, variant.evaluation, variant.evaluation.samples_per_ray
        )
    return row


def ablation_study(
    settings: Settings,
    store: ArtifactStore,
    variants: Sequence[str] = tuple(ABLATIONS),
    sparse_tag: str = "sfm",
    optimize_codes: bool = True,
) -> pd.DataFrame:
    """
    Train and evaluate every requested variant on one scene.

    Requires the dataset, the sparse maps under `sparse_tag` and a trained completion
    network in the store; both prior sets are exported here.
    """
    logger = get_pipeline_logger("ablation_study")
    unknown = [v for v in variants if v not in ABLATIONS]
    if unknown:
        raise ValueError(f"unknown variants {unknown}; expected a subset of {ABLATIONS}")

    dataset = store.load_dataset()
    needed = {prior_tag_for(v) for v in variants}
    if COMPLETED_TAG in needed:
        export_priors_job(settings, store, sparse_tag, COMPLETED_TAG, mode="completion")
    if SPARSE_ONLY_TAG in needed:
        export_priors_job(settings, store, sparse_tag, SPARSE_ONLY_TAG, mode="sparse")

    rows: List[Dict[str, Any]] = []
    for ablation in variants:
        rows.append(
            run_variant(settings, store, ablation, ablation, prior_tag_for(ablation), dataset, optimize_codes)
        )
    table = write_metrics_table(store.path("ablation.csv"), rows, ABLATION_COLUMNS)
    logger.info("Ablation study complete", variants=len(rows))
    return table


def density_sweep(
    settings: Settings,
    store: ArtifactStore,
    densities: Optional[Sequence[float]] = None,
    include_sparse_baseline: bool = False,
) -> pd.DataFrame:
    """
    Full method at each sparse density; one row per density.

    With `include_sparse_baseline` the variant without completion is added at the
    highest density as a reference row.
    """
    logger = get_pipeline_logger("density_sweep")
    densities = list(densities if densities is not None else settings.evaluation.densities)
    dataset = store.load_dataset()

    rows: List[Dict[str, Any]] = []
    for density in densities:
        tag = f"density_{density:g}"
        sparse = simulate_sparse_job(settings, store, tag=tag, density=density, dataset=dataset)
        export_priors_job(settings, store, tag, tag, mode="completion")
        result = run_variant(settings, store, tag, "none", tag, dataset, optimize_codes=False, measure_train_seams=False)
        rows.append({
            "method": "none",
            "density": density,
            "mean_points": float(sum(sparse["valid_counts"]) / len(sparse["valid_counts"])),
            **{k: result[k] for k in ("psnr", "ssim", "depth_rmse")},
        })

    if include_sparse_baseline and densities:
        density = max(densities)
        tag = f"density_{density:g}"
        export_priors_job(settings, store, tag, f"{tag}_sparse", mode="sparse")
        result = run_variant(
            settings, store, f"{tag}_no_completion", "no_completion", f"{tag}_sparse", dataset, False, False
        )
        rows.append({
            "method": "no_completion",
            "density": density,
            "mean_points": rows[densities.index(density)]["mean_points"],
            **{k: result[k] for k in ("psnr", "ssim", "depth_rmse")},
        })

    table = write_metrics_table(store.path("density_sweep.csv"), rows, DENSITY_COLUMNS)
    logger.info("Density sweep complete", rows=len(rows))
    return table
