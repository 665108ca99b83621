"""
Training data synthesis and the optimization loop of the completion network.
"""

from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Set, Tuple

import numpy as np
from tqdm import trange

from src.autodiff.graph import backward, no_grad
from src.autodiff.optim import Adam
from src.completion.losses import gnll_loss
from src.completion.network import CompletionNet
from src.config.settings import CompletionConfig, SceneConfig, SparseDepthConfig
from src.scene.geometry import generate_scene
from src.scene.render import render_dataset
from src.sparse.noise import resolve_noise_model
from src.sparse.projection import simulate_sparse_depth
from src.utils.logging_setup import get_pipeline_logger

# Training scenes are drawn from seeds above this offset so they never coincide with the
# scenes the radiance field is optimized on.
TRAINING_SEED_OFFSET = 100_000


@dataclass
class CompletionSample:
    image: np.ndarray           # H x W x 3
    sparse: np.ndarray          # H x W, 0 = invalid
    target: np.ndarray          # H x W sensor depth


@dataclass
class TrainingHistory:
    train_loss: List[float] = field(default_factory=list)
    val_loss: List[float] = field(default_factory=list)
    best_epoch: int = -1


def build_training_samples(
    completion: CompletionConfig,
    scene_config: SceneConfig,
    sparse_config: SparseDepthConfig,
    exclude_seeds: Optional[Set[int]] = None,
) -> List[CompletionSample]:
    """
    Render procedurally generated training rooms at the completion input resolution and
    simulate their sparse depth.

    Args:
        completion: Number of scenes, views per scene and input resolution
        scene_config: Room template; object count and room size are reused
        sparse_config: Sparse simulation settings
        exclude_seeds: Scene seeds reserved for radiance-field optimization

    Returns:
        One sample per rendered view
    """
    logger = get_pipeline_logger("completion")
    exclude = exclude_seeds or set()
    samples: List[CompletionSample] = []
    seed = TRAINING_SEED_OFFSET + completion.seed * 1000
    scenes_built = 0
    while scenes_built < completion.training_scenes:
        seed += 1
        if seed in exclude:
            continue
        room = replace(
            scene_config,
            seed=seed,
            image_height=completion.input_height,
            image_width=completion.input_width,
            num_train_views=completion.views_per_scene,
            num_test_views=0,
            appearance_jitter=0.0,
        )
        scene = generate_scene(seed, room)
        views = render_dataset(scene, room).train
        rng = np.random.default_rng([seed, 2])
        model = resolve_noise_model(
            views,
            sparse_config.noise_coefficients,
            rng,
            pixel_sigma=sparse_config.calibration_pixel_sigma,
            bins=sparse_config.calibration_bins,
        )
        simulation = simulate_sparse_depth(
            views,
            model,
            seed=seed,
            outlier_rate=sparse_config.outlier_rate,
            density_target=sparse_config.density,
            budget_factor=sparse_config.keypoint_budget_factor,
            occlusion_tolerance=sparse_config.occlusion_tolerance,
            augment=sparse_config.augment_to_target,
        )
        for index in range(len(views)):
            samples.append(CompletionSample(views.images[index], simulation.maps[index], views.depths[index]))
        scenes_built += 1

    logger.info("Built completion training set", scenes=scenes_built, samples=len(samples))
    return samples


def _stack(samples: Sequence[CompletionSample]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    return (
        np.stack([s.image for s in samples]),
        np.stack([s.sparse for s in samples]),
        np.stack([s.target for s in samples])[:, None],
    )


def evaluate_loss(net: CompletionNet, samples: Sequence[CompletionSample], batch_size: int) -> float:
    """Pixel-weighted mean GNLL over samples, without recording a graph."""
    total, pixels = 0.0, 0
    with no_grad():
        for start in range(0, len(samples), batch_size):
            images, sparse, target = _stack(samples[start:start + batch_size])
            output = net.forward(images, sparse)
            count = int((target > 0).sum())
            if count == 0:
                continue
            loss = gnll_loss(output.depth, output.std, target, floor=net.config.s_min)
            total += loss.item() * count
            pixels += count
    return total / pixels if pixels else float("nan")


def train_completion(
    net: CompletionNet,
    samples: Sequence[CompletionSample],
    epochs: int,
    learning_rate: float,
    batch_size: int,
    seed: int = 0,
    validation_fraction: float = 0.2,
) -> TrainingHistory:
    """
    Adam on the GNLL; the parameters with the best validation loss are restored at the end.

    With validation_fraction 0 the training samples double as the validation set.

    Args:
        net: Network, updated in place
        samples: Training samples
        epochs: Passes over the training split
        learning_rate: Adam learning rate
        batch_size: Samples per step
        seed: Shuffling seed
        validation_fraction: Share of samples held out

    Returns:
        Per-epoch losses and the selected epoch
    """
    logger = get_pipeline_logger("completion")
    history = TrainingHistory()
    if epochs <= 0:
        return history
    if not samples:
        raise ValueError("train_completion: no training samples")

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(samples))
    held_out = int(round(validation_fraction * len(samples)))
    if held_out >= len(samples):
        raise ValueError(f"validation split of {held_out} leaves no training samples")
    val = [samples[i] for i in order[:held_out]]
    train = [samples[i] for i in order[held_out:]]
    if not val:
        val = train

    optimizer = Adam(net.params, lr=learning_rate)
    best_loss = np.inf
    best_state = net.params.state_dict()

    for epoch in trange(epochs, desc="completion", leave=False):
        epoch_order = rng.permutation(len(train))
        losses = []
        for start in range(0, len(train), batch_size):
            batch = [train[i] for i in epoch_order[start:start + batch_size]]
            images, sparse, target = _stack(batch)
            if not (target > 0).any():
                continue
            optimizer.zero_grad()
            output = net.forward(images, sparse)
            loss = gnll_loss(output.depth, output.std, target, floor=net.config.s_min)
            backward(loss, net.params)
            optimizer.step()
            losses.append(loss.item())

        train_loss = float(np.mean(losses)) if losses else float("nan")
        val_loss = evaluate_loss(net, val, batch_size)
        history.train_loss.append(train_loss)
        history.val_loss.append(val_loss)
        if val_loss < best_loss:
            best_loss = val_loss
            best_state = net.params.state_dict()
            history.best_epoch = epoch
        logger.info("Completion epoch", epoch=epoch, train_loss=round(train_loss, 5), val_loss=round(val_loss, 5))

    net.params.load_state_dict(best_state)
    logger.info("Completion training finished", best_epoch=history.best_epoch, best_val_loss=round(float(best_loss), 5))
    return history
