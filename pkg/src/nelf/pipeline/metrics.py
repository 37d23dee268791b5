"""PSNR and SSIM for [0, 1] images."""

from __future__ import annotations

import numpy as np

PSNR_CAP_DB = 99.0
_MSE_FLOOR = 1e-10


def psnr(pred: np.ndarray, gt: np.ndarray) -> float:
    """10 log10(1 / MSE) for unit-range inputs, capped at 99 dB."""
    if np.shape(pred) != np.shape(gt):
        raise ValueError("shape mismatch")
    mse = float(np.mean((np.asarray(pred, dtype=np.float64) - np.asarray(gt, dtype=np.float64)) ** 2))
    if mse < _MSE_FLOOR:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, 10.0 * np.log10(1.0 / mse))


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r**2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def _windowed(img: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Weighted window sums over all fully-interior 11x11 patches."""
    k = w.shape[0]
    view = np.lib.stride_tricks.sliding_window_view(img, (k, k))
    return np.einsum("xyuv,uv->xy", view, w)


def ssim(pred: np.ndarray, gt: np.ndarray, k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean structural similarity, 11x11 Gaussian window (sigma 1.5), unit range.

    Computed per channel over windows fully inside the image, then averaged.
    """
    if np.shape(pred) != np.shape(gt):
        raise ValueError("shape mismatch")
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.ndim == 2:
        pred, gt = pred[:, :, None], gt[:, :, None]
    if pred.shape[0] < 11 or pred.shape[1] < 11:
        raise ValueError("images must be at least 11x11 for SSIM")
    w = _gaussian_window()
    c1, c2 = k1**2, k2**2
    scores = []
    for ch in range(pred.shape[2]):
        x, y = pred[:, :, ch], gt[:, :, ch]
        mu_x = _windowed(x, w)
        mu_y = _windowed(y, w)
        xx = _windowed(x * x, w) - mu_x**2
        yy = _windowed(y * y, w) - mu_y**2
        xy = _windowed(x * y, w) - mu_x * mu_y
        num = (2 * mu_x * mu_y + c1) * (2 * xy + c2)
        den = (mu_x**2 + mu_y**2 + c1) * (xx + yy + c2)
        scores.append(np.mean(num / den))
    return float(np.mean(scores))
