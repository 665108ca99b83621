# Radiance field optimization
from src.nerf.losses import color_loss, depth_gate, depth_loss, depth_loss_terms
from src.nerf.trainer import (
    NonFiniteLossError,
    RayBatch,
    TrainState,
    build_ray_pool,
    create_state,
    depth_loss_mode,
    load_trained_field,
    prepare_priors,
    restore_checkpoint,
    save_checkpoint,
    scene_bounds,
    train,
    train_step,
)

__all__ = [
    "NonFiniteLossError",
    "RayBatch",
    "TrainState",
    "build_ray_pool",
    "color_loss",
    "create_state",
    "depth_gate",
    "depth_loss",
    "depth_loss_mode",
    "depth_loss_terms",
    "load_trained_field",
    "prepare_priors",
    "restore_checkpoint",
    "save_checkpoint",
    "scene_bounds",
    "train",
    "train_step",
]
