# Depth completion with uncertainty
from src.completion.calibration import CalibrationReport, calibration_report
from src.completion.cspn import cspn_refine, normalize_affinity
from src.completion.losses import gnll_loss
from src.completion.network import CompletionNet, DepthPrior, complete
from src.completion.training import CompletionSample, build_training_samples, train_completion

__all__ = [
    "CalibrationReport",
    "CompletionNet",
    "CompletionSample",
    "DepthPrior",
    "build_training_samples",
    "calibration_report",
    "complete",
    "cspn_refine",
    "gnll_loss",
    "normalize_affinity",
    "train_completion",
]
