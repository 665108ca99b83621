"""
Radiance field optimization: batched rays, colour loss plus the gated depth term,
depth-guided sampling and resumable checkpoints.

Checkpoint directory layout:
    params.bin      field parameters (binary, see src.autodiff.checkpoint)
    optimizer.bin   Adam moments and step count
    config.yaml     settings snapshot
    metrics.csv     append-only validation log (iteration, psnr, depth_rmse)
"""

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Tuple

import numpy as np
from tqdm import trange

from src.autodiff import graph as ad
from src.autodiff.checkpoint import load_optimizer, load_parameters, save_optimizer, save_parameters
from src.autodiff.optim import Adam
from src.config.settings import FieldConfig, Settings, TrainConfig, load_settings
from src.field.encoding import SceneBounds
from src.field.mlp import LATENT_CODES, FieldMLP
from src.nerf.losses import color_loss, depth_loss_terms
from src.render.pixel import render_image, render_rays, render_two_pass
from src.render.sampling import depth_guided_sample, stratified_sample
from src.scene.camera import image_rays
from src.scene.render import CameraViews
from src.utils.logging_setup import get_pipeline_logger, log_error_with_context, log_train_step
from src.utils.metrics import depth_rmse, psnr
from src.utils.storage import MetricsLog

PARAMS_FILE = "params.bin"
OPTIMIZER_FILE = "optimizer.bin"
CONFIG_FILE = "config.yaml"
METRICS_FILE = "metrics.csv"


class NonFiniteLossError(RuntimeError):
    """The training loss became NaN or infinite."""

    def __init__(self, iteration: int, ray_indices: np.ndarray, loss_color: float, loss_depth: float):
        self.iteration = iteration
        self.ray_indices = np.asarray(ray_indices)
        super().__init__(
            f"non-finite loss at iteration {iteration} (color={loss_color}, depth={loss_depth}); "
            f"offending rays: {self.ray_indices[:16].tolist()}"
        )


@dataclass
class RayBatch:
    """Per-ray supervision; a prior depth of 0 marks a ray without a depth prior."""
    origins: np.ndarray          # (N, 3)
    directions: np.ndarray       # (N, 3)
    colors: np.ndarray           # (N, 3)
    depths: np.ndarray           # (N,)
    stds: np.ndarray             # (N,)
    image_indices: np.ndarray    # (N,)
    ray_indices: np.ndarray      # (N,) positions in the full training ray pool

    def __len__(self) -> int:
        return len(self.origins)

    def subset(self, selection: np.ndarray) -> "RayBatch":
        return RayBatch(
            origins=self.origins[selection],
            directions=self.directions[selection],
            colors=self.colors[selection],
            depths=self.depths[selection],
            stds=self.stds[selection],
            image_indices=self.image_indices[selection],
            ray_indices=self.ray_indices[selection],
        )


@dataclass
class TrainState:
    field: FieldMLP
    optimizer: Adam
    iteration: int = 0


def depth_loss_mode(ablation: str) -> Tuple[str, bool]:
    """(loss kind, gated) per method variant."""
    if ablation == "no_gnll":
        return "mse", True
    if ablation == "no_uncertainty":
        return "mse", False
    return "gnll", True


def prepare_priors(depths: np.ndarray, stds: np.ndarray, ablation: str) -> Tuple[np.ndarray, np.ndarray]:
    """
    Apply the variant's treatment of prior uncertainty.

    Without uncertainty every valid pixel gets the median prior std of the scene.
    """
    depths = np.asarray(depths, dtype=np.float64)
    stds = np.asarray(stds, dtype=np.float64)
    if depths.shape != stds.shape:
        raise ValueError(f"prior depth {depths.shape} and std {stds.shape} differ in shape")
    valid = depths > 0
    if ablation == "no_uncertainty" and valid.any():
        stds = np.where(valid, float(np.median(stds[valid])), 0.0)
    return depths, np.where(valid, stds, 0.0)


def build_ray_pool(views: CameraViews, prior_depths: np.ndarray, prior_stds: np.ndarray) -> RayBatch:
    """All training pixels as one batch, view-major then row-major."""
    height, width = views.shape
    if prior_depths.shape != (len(views), height, width) or prior_stds.shape != prior_depths.shape:
        raise ValueError(
            f"priors {prior_depths.shape}/{prior_stds.shape} do not match {len(views)} views of {height}x{width}"
        )
    origins, directions = [], []
    for pose in views.poses:
        o, d = image_rays(views.intrinsics, pose)
        origins.append(o.reshape(-1, 3))
        directions.append(d.reshape(-1, 3))
    count = len(views) * height * width
    return RayBatch(
        origins=np.concatenate(origins),
        directions=np.concatenate(directions),
        colors=views.images.reshape(-1, 3),
        depths=prior_depths.reshape(-1),
        stds=prior_stds.reshape(-1),
        image_indices=np.repeat(np.arange(len(views)), height * width),
        ray_indices=np.arange(count),
    )


def field_config_for(config: FieldConfig, ablation: str) -> FieldConfig:
    if ablation == "no_latent_code":
        return replace(config, latent_size=0)
    return config


def scene_bounds(room_size: Tuple[float, float, float]) -> SceneBounds:
    return SceneBounds.from_box(np.zeros(3), np.asarray(room_size, dtype=np.float64))


def train_step(
    state: TrainState,
    batch: RayBatch,
    config: TrainConfig,
    near: float,
    far: float,
    rng: np.random.Generator,
) -> Tuple[float, float]:
    """
    One optimizer step on a ray batch.

    Rays with a valid prior sample half stratified and half around the prior; rays
    without one use the two-pass sampler and get no depth loss. Stratified mode samples
    every ray uniformly over [near, far].

    Returns:
        (colour loss, unweighted depth loss)
    """
    field = state.field
    weight = config.effective_depth_loss_weight
    kind, gated = depth_loss_mode(config.ablation)
    stratified = config.effective_sampling == "stratified"
    samples = config.samples_per_ray
    total = len(batch)

    state.optimizer.zero_grad()
    if stratified:
        groups = [(np.arange(total), True)]
    else:
        valid = batch.depths > 0
        groups = [(np.flatnonzero(valid), True), (np.flatnonzero(~valid), False)]

    color_terms = []
    depth_terms = []
    depth_rays = 0
    finite = np.ones(total, dtype=bool)
    for selection, supervised in groups:
        if selection.size == 0:
            continue
        rays = batch.subset(selection)
        codes = field.codes_for(rays.image_indices)
        if stratified:
            t = stratified_sample(near, far, samples, rng, rays=len(rays))
            result = render_rays(field, rays.origins, rays.directions, t, far, codes)
        elif supervised:
            t = depth_guided_sample(near, far, rays.depths, rays.stds, samples, rng)
            result = render_rays(field, rays.origins, rays.directions, t, far, codes)
        else:
            result, _ = render_two_pass(field, rays.origins, rays.directions, near, far, samples, rng, codes)

        color_terms.append(color_loss(result.color, rays.colors) * (len(rays) / total))
        finite[selection] &= np.isfinite(result.color.value).all(axis=-1)

        prior = rays.depths > 0
        if weight > 0 and supervised and prior.any():
            keep = np.flatnonzero(prior)
            terms, _ = depth_loss_terms(
                ad.take(result.depth, keep),
                ad.take(result.std, keep),
                rays.depths[keep],
                rays.stds[keep],
                kind=kind,
                gated=gated,
                std_floor=config.std_floor,
            )
            depth_terms.append(ad.sum_(terms))
            depth_rays += keep.size
            finite[selection[keep]] &= np.isfinite(terms.value)

    loss_color = color_terms[0]
    for term in color_terms[1:]:
        loss_color = loss_color + term
    loss = loss_color
    loss_depth_value = 0.0
    if depth_terms:
        loss_depth = depth_terms[0]
        for term in depth_terms[1:]:
            loss_depth = loss_depth + term
        loss_depth = loss_depth / float(depth_rays)
        loss_depth_value = loss_depth.item()
        loss = loss + loss_depth * weight

    if not np.isfinite(loss.item()):
        offending = batch.ray_indices[~finite] if (~finite).any() else batch.ray_indices
        raise NonFiniteLossError(state.iteration, offending, loss_color.item(), loss_depth_value)

    ad.backward(loss, field.params)
    state.optimizer.step()
    state.iteration += 1
    return loss_color.item(), loss_depth_value


def create_state(
    field_config: FieldConfig, train_config: TrainConfig, bounds: SceneBounds, num_images: int
) -> TrainState:
    field = FieldMLP(field_config_for(field_config, train_config.ablation), bounds, num_images, seed=train_config.seed)
    return TrainState(field=field, optimizer=Adam(field.params, lr=train_config.learning_rate))


def save_checkpoint(state: TrainState, directory: Path, settings: Optional[Settings] = None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_parameters(directory / PARAMS_FILE, state.field.params)
    save_optimizer(directory / OPTIMIZER_FILE, state.optimizer.state)
    if settings is not None:
        settings.snapshot(directory / CONFIG_FILE)


def restore_checkpoint(state: TrainState, directory: Path) -> bool:
    """Load parameters and optimizer state if the directory holds a checkpoint."""
    directory = Path(directory)
    if not (directory / PARAMS_FILE).exists() or not (directory / OPTIMIZER_FILE).exists():
        return False
    load_parameters(directory / PARAMS_FILE, state.field.params)
    state.optimizer.state = load_optimizer(directory / OPTIMIZER_FILE)
    state.iteration = state.optimizer.state.step
    return True


def load_trained_field(directory: Path, bounds: SceneBounds, num_images: int) -> Tuple[FieldMLP, Settings]:
    """Rebuild a trained field from its checkpoint directory."""
    directory = Path(directory)
    config_path = directory / CONFIG_FILE
    if not config_path.exists():
        raise FileNotFoundError(f"no settings snapshot in {directory}; run train-nerf first")
    settings = load_settings(config_path)
    field = FieldMLP(
        field_config_for(settings.radiance, settings.train.ablation), bounds, num_images, seed=settings.train.seed
    )
    load_parameters(directory / PARAMS_FILE, field.params)
    return field, settings


def validate_view(
    field: FieldMLP, views: CameraViews, index: int, samples: int, seed: int, chunk_size: int
) -> Tuple[float, float]:
    """PSNR and depth RMSE of a training view rendered with its own latent code."""
    code = None
    if field.latent_size > 0:
        code = field.params[LATENT_CODES].value[index]
    rendered = render_image(
        field, views.intrinsics, views.poses[index], views.near, views.far, samples, seed, code, chunk_size
    )
    return psnr(rendered["rgb"], views.images[index]), depth_rmse(rendered["depth"], views.depths[index])


def train(
    views: CameraViews,
    prior_depths: np.ndarray,
    prior_stds: np.ndarray,
    bounds: SceneBounds,
    settings: Settings,
    checkpoint_dir: Optional[Path] = None,
    resume: bool = True,
) -> TrainState:
    """
    Optimize a radiance field on the training views.

    Pixels are drawn uniformly over all training pixels; the random stream of every
    iteration is derived from (seed, iteration), so resumed runs match uninterrupted ones.

    Args:
        views: Training views
        prior_depths, prior_stds: (N, H, W) depth priors; depth 0 marks pixels without a prior
        bounds: Scene box used to normalize field inputs
        settings: Field, training and evaluation settings
        checkpoint_dir: Where to write checkpoints and the metrics log
        resume: Continue from an existing checkpoint in `checkpoint_dir`

    Returns:
        Final training state
    """
    logger = get_pipeline_logger("trainer")
    config = settings.train
    if len(views) < 1:
        raise ValueError("train: at least one training view is required")

    depths, stds = prepare_priors(prior_depths, prior_stds, config.ablation)
    pool = build_ray_pool(views, depths, stds)
    state = create_state(settings.radiance, config, bounds, len(views))

    metrics_log = None
    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        if resume and restore_checkpoint(state, checkpoint_dir):
            logger.info("Resumed from checkpoint", directory=str(checkpoint_dir), iteration=state.iteration)
        metrics_log = MetricsLog(checkpoint_dir / METRICS_FILE)

    logger.info(
        "Training radiance field",
        rays=len(pool),
        prior_rays=int((pool.depths > 0).sum()),
        iterations=config.iterations,
        ablation=config.ablation,
        depth_loss_weight=config.effective_depth_loss_weight,
        parameters=state.field.params.num_values(),
    )

    batch_size = min(config.batch_size, len(pool))
    for iteration in trange(state.iteration, config.iterations, desc="train-nerf", disable=config.iterations < 10):
        rng = np.random.default_rng([config.seed, iteration])
        batch = pool.subset(rng.integers(0, len(pool), size=batch_size))
        try:
            loss_color, loss_depth = train_step(state, batch, config, views.near, views.far, rng)
        except NonFiniteLossError as e:
            log_error_with_context(e, {"iteration": e.iteration, "rays": e.ray_indices[:16].tolist()}, "trainer")
            raise

        step = state.iteration
        if step % max(1, config.validate_every // 10) == 0:
            log_train_step(step, loss_color, loss_depth, ablation=config.ablation)

        if metrics_log is not None and config.validate_every > 0 and step % config.validate_every == 0:
            view = min(config.validation_view, len(views) - 1)
            value_psnr, value_rmse = validate_view(
                state.field, views, view, config.samples_per_ray, config.seed, settings.evaluation.chunk_size
            )
            metrics_log.append({"iteration": step, "psnr": value_psnr, "depth_rmse": value_rmse})
            logger.info("Validation", iteration=step, view=view, psnr=value_psnr, depth_rmse=value_rmse)

        if checkpoint_dir is not None and config.checkpoint_every > 0 and step % config.checkpoint_every == 0:
            save_checkpoint(state, checkpoint_dir, settings)

    if checkpoint_dir is not None:
        save_checkpoint(state, checkpoint_dir, settings)
        logger.info("Saved checkpoint", directory=str(checkpoint_dir), iteration=state.iteration)
    return state
