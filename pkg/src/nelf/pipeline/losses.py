"""Supervision losses: L1 color/alpha, head-size-normalized depth, log-L1 light."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..envmap import EnvironmentMap, log_l1

HEAD_SIZE_M = 0.2  # depth normalizer d: average human head size, 200 mm


@dataclass(frozen=True)
class LossBreakdown:
    l_c: float
    l_d: float
    l_a: float
    l_t: float

    @property
    def total(self) -> float:
        return self.l_c + self.l_d + self.l_a + self.l_t

    def as_dict(self) -> dict:
        return {
            "l_c": self.l_c,
            "l_d": self.l_d,
            "l_a": self.l_a,
            "l_t": self.l_t,
            "total": self.total,
        }


def _check_shapes(pred: np.ndarray, gt: np.ndarray) -> None:
    if np.shape(pred) != np.shape(gt):
        raise ValueError(f"shape mismatch: {np.shape(pred)} vs {np.shape(gt)}")


def loss_rgb(pred: np.ndarray, gt: np.ndarray) -> float:
    _check_shapes(pred, gt)
    return float(np.mean(np.abs(np.asarray(pred) - np.asarray(gt))))


def loss_alpha(pred: np.ndarray, gt: np.ndarray) -> float:
    _check_shapes(pred, gt)
    return float(np.mean(np.abs(np.asarray(pred) - np.asarray(gt))))


def loss_depth(pred: np.ndarray, gt: np.ndarray, gt_alpha: np.ndarray) -> float:
    """Mean absolute depth error over pixels with gt alpha > 0.5, in head units."""
    _check_shapes(pred, gt)
    mask = np.asarray(gt_alpha) > 0.5
    if not np.any(mask):
        return 0.0
    err = np.abs(np.asarray(pred) - np.asarray(gt))[mask]
    return float(err.mean() / HEAD_SIZE_M)


def loss_light(pred: EnvironmentMap, gt: EnvironmentMap) -> float:
    return log_l1(pred, gt)
