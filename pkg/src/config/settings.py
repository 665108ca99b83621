"""
Configuration settings for the dense-prior NeRF pipeline.
Manages scene synthesis, sparse depth simulation, depth completion, radiance field
and evaluation parameters.
"""

import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import yaml
from dotenv import load_dotenv

# Load environment variables
load_dotenv()


@dataclass
class SceneConfig:
    """Synthetic room and camera rig settings."""
    seed: int = 0
    room_size: Tuple[float, float, float] = (4.0, 2.6, 3.0)   # x (width), y (height), z (depth) in meters
    object_count: int = 3
    image_width: int = 64
    image_height: int = 64
    fov_deg: float = 90.0
    num_train_views: int = 8
    num_test_views: int = 4
    rig_radius: float = 0.35           # cameras sit on a small circle around the room centre
    camera_height: float = 1.3
    camera_clearance: float = 0.8      # objects keep out of this radius around the rig
    near: float = 0.05
    far: Optional[float] = None        # None: room diagonal
    appearance_jitter: float = 0.0     # max |gain - 1| of per-view intensity shifts
    textureless_wall: bool = True
    max_placement_attempts: int = 200


@dataclass
class SparseDepthConfig:
    """SfM-like sparse depth simulation."""
    seed: int = 0
    density: float = 0.0004            # 0.04% valid pixels on average
    outlier_rate: float = 0.02
    occlusion_tolerance: float = 0.01  # relative depth tolerance of the z-test
    keypoint_budget_factor: float = 4.0
    noise_coefficients: Optional[Tuple[float, float, float]] = None  # None: self-calibrate
    calibration_pixel_sigma: float = 0.5
    calibration_bins: int = 10
    augment_to_target: bool = True     # top up sparse maps below the density target


@dataclass
class CompletionConfig:
    """Depth prior network and its training schedule."""
    seed: int = 0
    encoder_widths: Tuple[int, int, int] = (16, 32, 64)
    input_height: int = 64
    input_width: int = 80
    cspn_iterations_depth: int = 48
    cspn_iterations_std: int = 24
    s_min: float = 0.01
    depth_scale: float = 5.0
    learning_rate: float = 0.0001
    batch_size: int = 8
    epochs: int = 20
    validation_fraction: float = 0.2
    training_scenes: int = 12
    views_per_scene: int = 6
    invalidate_std_above: Optional[float] = None


@dataclass
class FieldConfig:
    """Radiance field MLP."""
    seed: int = 0
    depth: int = 8
    width: int = 256
    skip_layer: int = 4                # encoded input re-enters before the fifth layer
    view_width: int = 128
    frequencies: int = 9
    latent_size: int = 4               # 4 for ScanNet-style runs, 16 for Matterport-style


# Depth loss weights per variant: (scannet-style SfM priors, matterport-style clean priors)
DEPTH_LOSS_WEIGHTS: Dict[str, Tuple[float, float]] = {
    "no_completion": (1.0, 0.25),
    "no_uncertainty": (0.001, 0.007),
    "no_gnll": (0.04, 0.03),
    "no_latent_code": (0.003, 0.007),
    "none": (0.003, 0.007),
    "baseline": (0.0, 0.0),
}

ABLATIONS: List[str] = ["none", "no_completion", "no_uncertainty", "no_gnll", "no_latent_code", "baseline"]
PRIOR_STYLES: List[str] = ["scannet", "matterport"]
SAMPLING_MODES: List[str] = ["depth_guided", "stratified"]


def depth_loss_weight_for(ablation: str, prior_style: str = "scannet") -> float:
    """Look up the depth loss weight for a method variant and prior style."""
    if ablation not in DEPTH_LOSS_WEIGHTS:
        raise ValueError(f"unknown ablation {ablation!r}; expected one of {ABLATIONS}")
    if prior_style not in PRIOR_STYLES:
        raise ValueError(f"unknown prior_style {prior_style!r}; expected one of {PRIOR_STYLES}")
    scannet, matterport = DEPTH_LOSS_WEIGHTS[ablation]
    return scannet if prior_style == "scannet" else matterport


@dataclass
class TrainConfig:
    """Radiance field optimization."""
    seed: int = 0
    depth_loss_weight: Optional[float] = None   # None: look up DEPTH_LOSS_WEIGHTS
    prior_style: str = "scannet"
    ablation: str = "none"
    sampling: str = "depth_guided"
    batch_size: int = 1024
    iterations: int = 5000
    learning_rate: float = 0.0005
    samples_per_ray: int = 256
    std_floor: float = 1e-6            # floor on the rendered std inside the depth loss
    checkpoint_every: int = 1000
    validate_every: int = 500
    validation_view: int = 0

    @property
    def effective_depth_loss_weight(self) -> float:
        if self.depth_loss_weight is not None:
            return self.depth_loss_weight
        return depth_loss_weight_for(self.ablation, self.prior_style)

    @property
    def effective_sampling(self) -> str:
        """The plain baseline always samples stratified."""
        return "stratified" if self.ablation == "baseline" else self.sampling


@dataclass
class EvalConfig:
    """Evaluation protocol."""
    seed: int = 0
    samples_per_ray: int = 256         # MLP queries per pixel at test time, for every sampler
    code_steps: int = 200
    code_learning_rate: float = 0.01
    code_eval_every: int = 20
    code_batch_size: int = 1024
    error_scale: float = 0.5           # depth error images span 0 .. error_scale meters
    ssim_window: int = 11
    densities: Tuple[float, ...] = (0.001, 0.0005, 0.0001)
    chunk_size: int = 2048


@dataclass
class LoggingConfig:
    """Logging configuration."""
    log_level: str = field(default_factory=lambda: os.getenv("DPNERF_LOG_LEVEL", "INFO"))
    log_dir: str = "logs"
    enable_file_logging: bool = True


def _coerce(value: Any, current: Any) -> Any:
    """Keep tuple-typed fields tuples when they come back from YAML as lists."""
    if isinstance(current, tuple) and isinstance(value, list):
        return tuple(value)
    if isinstance(value, list) and current is None:
        return tuple(value)
    return value


def _apply_section(section: Any, values: Dict[str, Any], section_name: str) -> None:
    known = {f.name for f in fields(section)}
    for key, value in values.items():
        if key not in known:
            raise ValueError(f"unknown setting {section_name}.{key}")
        setattr(section, key, _coerce(value, getattr(section, key)))


@dataclass
class Settings:
    """Main settings class combining all configuration."""
    scene: SceneConfig = field(default_factory=SceneConfig)
    sparse: SparseDepthConfig = field(default_factory=SparseDepthConfig)
    completion: CompletionConfig = field(default_factory=CompletionConfig)
    radiance: FieldConfig = field(default_factory=FieldConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    evaluation: EvalConfig = field(default_factory=EvalConfig)
    logging: LoggingConfig = field(default_factory=LoggingConfig)

    def validate(self) -> bool:
        """Validate configuration settings."""
        if any(size <= 0 for size in self.scene.room_size):
            raise ValueError("scene.room_size entries must be positive")

        if self.scene.object_count < 0:
            raise ValueError("scene.object_count must be >= 0")

        if not 0.0 < self.sparse.density < 1.0:
            raise ValueError("sparse.density must be in (0, 1)")

        if not 0.0 <= self.sparse.outlier_rate < 1.0:
            raise ValueError("sparse.outlier_rate must be in [0, 1)")

        if self.completion.s_min <= 0:
            raise ValueError("completion.s_min must be positive")

        stride = 2 ** len(self.completion.encoder_widths)
        if self.completion.input_height % stride or self.completion.input_width % stride:
            raise ValueError(
                f"completion input {self.completion.input_height}x{self.completion.input_width} "
                f"must be divisible by the encoder stride {stride}"
            )

        if self.train.ablation not in ABLATIONS:
            raise ValueError(f"train.ablation must be one of {ABLATIONS}")

        if self.train.sampling not in SAMPLING_MODES:
            raise ValueError(f"train.sampling must be one of {SAMPLING_MODES}")

        if self.train.effective_depth_loss_weight < 0:
            raise ValueError("train.depth_loss_weight must be >= 0")

        if self.train.batch_size < 1:
            raise ValueError("train.batch_size must be >= 1")

        if self.train.samples_per_ray < 2 or self.train.samples_per_ray % 2:
            raise ValueError("train.samples_per_ray must be even and >= 2")

        if self.evaluation.samples_per_ray < 2 or self.evaluation.samples_per_ray % 2:
            raise ValueError("evaluation.samples_per_ray must be even and >= 2")

        if any(not 0.0 < d < 1.0 for d in self.evaluation.densities):
            raise ValueError("evaluation.densities must lie in (0, 1)")

        return True

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def snapshot(self, path: Path) -> None:
        """Write a YAML snapshot, used inside checkpoint directories."""
        data = self.to_dict()
        with open(path, "w") as handle:
            yaml.safe_dump(_plain(data), handle, sort_keys=True)


def _plain(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def load_settings(path: Optional[os.PathLike] = None, overrides: Optional[Dict[str, Dict[str, Any]]] = None) -> Settings:
    """
    Build settings from defaults, environment variables and an optional YAML experiment file.

    Args:
        path: YAML file with one mapping per section (scene, sparse, completion, radiance, ...)
        overrides: Extra per-section values applied last (used by the CLI flags)

    Returns:
        Validated settings
    """
    loaded = Settings()

    env_seed = os.getenv("DPNERF_SEED")
    if env_seed is not None:
        for section in (loaded.scene, loaded.sparse, loaded.completion, loaded.radiance, loaded.train, loaded.evaluation):
            section.seed = int(env_seed)

    sections: Dict[str, Dict[str, Any]] = {}
    if path is not None:
        with open(path) as handle:
            sections = yaml.safe_load(handle) or {}
        if not isinstance(sections, dict):
            raise ValueError(f"experiment file {path} must contain a mapping of sections")

    for source in (sections, overrides or {}):
        for name, values in source.items():
            section = getattr(loaded, name, None)
            if section is None or not hasattr(section, "__dataclass_fields__"):
                raise ValueError(f"unknown settings section {name!r}")
            _apply_section(section, values or {}, name)

    loaded.validate()
    return loaded


def workdir() -> Path:
    """Root directory for pipeline artifacts."""
    return Path(os.getenv("DPNERF_WORKDIR", "runs"))


# Global settings instance
settings = Settings()

# Validate settings on import
try:
    settings.validate()
except ValueError as e:
    print(f"Configuration validation error: {e}")
    print("Please check your environment variables and configuration.")
