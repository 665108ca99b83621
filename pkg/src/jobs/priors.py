"""
Depth completion jobs: train the prior network and export dense priors for a scene.
"""

from typing import Any, Dict, Tuple

import numpy as np

from src.autodiff.checkpoint import load_parameters, save_parameters
from src.completion.calibration import calibration_report
from src.completion.network import CompletionNet, complete
from src.completion.training import build_training_samples, train_completion
from src.config.settings import Settings, load_settings
from src.jobs.simulate import load_noise_model
from src.utils.logging_setup import get_pipeline_logger
from src.utils.storage import ArtifactStore, write_metrics_table

PRIOR_MODES = ("completion", "sparse")
CALIBRATION_COLUMNS = ["tag", "pixels", "dense_rmse", "sparse_rmse", "coverage_1", "coverage_2", "coverage_3"]


def train_completion_job(settings: Settings, store: ArtifactStore) -> Dict[str, Any]:
    """Train the completion network on procedurally generated rooms and save it to the run."""
    logger = get_pipeline_logger("train_completion")
    config = settings.completion
    samples = build_training_samples(config, settings.scene, settings.sparse, exclude_seeds={settings.scene.seed})
    net = CompletionNet(config, seed=config.seed)
    history = train_completion(
        net,
        samples,
        epochs=config.epochs,
        learning_rate=config.learning_rate,
        batch_size=config.batch_size,
        seed=config.seed,
        validation_fraction=config.validation_fraction,
    )

    store.completion_dir.mkdir(parents=True, exist_ok=True)
    save_parameters(store.completion_dir / "params.bin", net.params)
    settings.snapshot(store.completion_dir / "config.yaml")
    summary = {
        "samples": len(samples),
        "best_epoch": history.best_epoch,
        "train_loss": history.train_loss[-1] if history.train_loss else float("nan"),
        "val_loss": min(history.val_loss) if history.val_loss else float("nan"),
    }
    logger.info("Trained completion network", **summary)
    return summary


def load_completion_net(store: ArtifactStore) -> CompletionNet:
    directory = store.completion_dir
    snapshot = load_settings(store.require(directory / "config.yaml", "train-completion"))
    net = CompletionNet(snapshot.completion, seed=snapshot.completion.seed)
    load_parameters(store.require(directory / "params.bin", "train-completion"), net.params)
    return net


def sparse_priors(sparse: np.ndarray, sigma: Any) -> Tuple[np.ndarray, np.ndarray]:
    """Sparse depth used directly as the prior; the std comes from the noise model."""
    valid = sparse > 0
    std = np.where(valid, sigma(np.where(valid, sparse, 1.0)), 0.0)
    return np.where(valid, sparse, 0.0), std


def export_priors_job(
    settings: Settings,
    store: ArtifactStore,
    sparse_tag: str = "sfm",
    prior_tag: str = "completed",
    mode: str = "completion",
) -> Dict[str, Any]:
    """
    Turn a sparse map set into per-view depth priors.

    Args:
        settings: Completion settings
        store: Run directory holding the dataset and sparse maps
        sparse_tag: Sparse map set to read
        prior_tag: Name of the prior set to write
        mode: "completion" runs the trained network; "sparse" passes the sparse depth through

    Returns:
        Calibration summary of the exported priors against ground truth
    """
    logger = get_pipeline_logger("export_priors")
    if mode not in PRIOR_MODES:
        raise ValueError(f"export_priors: unknown mode {mode!r}; expected one of {PRIOR_MODES}")
    views = store.load_split("train")
    sparse = store.load_sparse(sparse_tag, len(views))

    depths, stds = [], []
    if mode == "completion":
        net = load_completion_net(store)
        for image, sparse_map in zip(views.images, sparse):
            prior = complete(
                net, image, sparse_map, far=views.far, invalidate_std_above=settings.completion.invalidate_std_above
            )
            depths.append(prior.depth)
            stds.append(prior.std)
    else:
        model = load_noise_model(store, sparse_tag)
        for sparse_map in sparse:
            depth, std = sparse_priors(sparse_map, model.sigma)
            depths.append(depth)
            stds.append(std)
    store.save_priors(prior_tag, depths, stds)

    # pass-through priors are scored on their own pixels only
    masks = [d > 0 for d in depths] if mode == "sparse" else [g > 0 for g in views.depths]
    if not any(mask.any() for mask in masks):
        raise ValueError(f"export_priors: prior set {prior_tag!r} has no valid pixels")
    report = calibration_report(
        [d[m] for d, m in zip(depths, masks)],
        [s[m] for s, m in zip(stds, masks)],
        [g[m] for g, m in zip(views.depths, masks)],
        sparse=[s[m] for s, m in zip(sparse, masks)],
    )
    row = {"tag": prior_tag, "pixels": report.pixels, **report.as_row()}
    write_metrics_table(store.path("priors", prior_tag, "calibration.csv"), [row], CALIBRATION_COLUMNS)
    logger.info("Exported depth priors", tag=prior_tag, mode=mode, **{k: v for k, v in row.items() if k != "tag"})
    return row
