"""
Uncertainty calibration of depth priors.
"""

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np

COVERAGE_LEVELS = (1, 2, 3)


@dataclass
class CalibrationReport:
    """Fraction of pixels with |z - z_gt| <= k s, plus dense (and optionally sparse) RMSE."""
    coverage: Dict[int, float] = field(default_factory=dict)
    dense_rmse: float = 0.0
    sparse_rmse: Optional[float] = None
    pixels: int = 0

    def as_row(self) -> Dict[str, float]:
        row = {f"coverage_{k}": v for k, v in self.coverage.items()}
        row["dense_rmse"] = self.dense_rmse
        if self.sparse_rmse is not None:
            row["sparse_rmse"] = self.sparse_rmse
        return row


def calibration_report(
    depths: Sequence[np.ndarray],
    stds: Sequence[np.ndarray],
    gts: Sequence[np.ndarray],
    sparse: Optional[Sequence[np.ndarray]] = None,
) -> CalibrationReport:
    """
    Coverage of the predicted std at k = 1, 2, 3 over all pixels with valid ground truth.

    Args:
        depths: Prior depth maps
        stds: Prior std maps
        gts: Ground-truth depth maps (0 = invalid)
        sparse: Optional sparse inputs for the sparse RMSE column

    Returns:
        Calibration report
    """
    depth = np.concatenate([np.asarray(d, dtype=np.float64).reshape(-1) for d in depths])
    std = np.concatenate([np.asarray(s, dtype=np.float64).reshape(-1) for s in stds])
    gt = np.concatenate([np.asarray(g, dtype=np.float64).reshape(-1) for g in gts])
    if not depth.shape == std.shape == gt.shape:
        raise ValueError("calibration_report: depth, std and ground truth sizes differ")
    valid = gt > 0
    if not valid.any():
        raise ValueError("calibration_report: no valid ground-truth pixels")

    error = np.abs(depth[valid] - gt[valid])
    with np.errstate(invalid="ignore"):
        coverage = {k: float(np.mean(error <= k * std[valid])) for k in COVERAGE_LEVELS}
    report = CalibrationReport(
        coverage=coverage,
        dense_rmse=float(np.sqrt(np.mean(error ** 2))),
        pixels=int(valid.sum()),
    )

    if sparse is not None:
        values = np.concatenate([np.asarray(s, dtype=np.float64).reshape(-1) for s in sparse])
        observed = (values > 0) & valid
        if observed.any():
            report.sparse_rmse = float(np.sqrt(np.mean((values[observed] - gt[observed]) ** 2)))
    return report
