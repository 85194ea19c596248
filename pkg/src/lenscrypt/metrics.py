"""Image quality metrics: MSE, PSNR and Gaussian-window SSIM."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

__all__ = ["IDENTICAL_PSNR", "mse", "psnr", "ssim", "gaussian_window"]

# returned by psnr() for identical images
IDENTICAL_PSNR = float("inf")


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    # a single-channel (1, H, W) stack pairs with a plain (H, W) image
    if a.ndim == 2 and b.ndim == 3 and b.shape[0] == 1:
        a = a[None]
    elif b.ndim == 2 and a.ndim == 3 and a.shape[0] == 1:
        b = b[None]
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b, peak: float = 1.0) -> float:
    """``10 log10(peak^2 / MSE)``; :data:`IDENTICAL_PSNR` when the MSE is zero."""
    err = mse(a, b)
    if err == 0:
        return IDENTICAL_PSNR
    return float(10 * np.log10(peak**2 / err))


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2
    g = np.exp(-(r**2) / (2 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def _ssim_plane(x: np.ndarray, y: np.ndarray, peak: float, win: np.ndarray) -> float:
    c1 = (0.01 * peak) ** 2
    c2 = (0.03 * peak) ** 2

    def filt(v):
        return ndimage.correlate(v, win, mode="reflect")

    mx, my = filt(x), filt(y)
    sxx = filt(x * x) - mx * mx
    syy = filt(y * y) - my * my
    sxy = filt(x * y) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    s = num / den
    pad = (win.shape[0] - 1) // 2
    return float(s[pad:-pad, pad:-pad].mean())


def ssim(a, b, peak: float = 1.0, window: int = 11, sigma: float = 1.5) -> float:
    """
    Structural similarity with an 11x11 Gaussian window (sigma 1.5).

    Accepts ``(H, W)`` or ``(C, H, W)`` arrays; channels are averaged. Border
    pixels closer than half a window to the edge are excluded from the mean.
    """
    a, b = _pair(a, b)
    if a.ndim == 2:
        a, b = a[None], b[None]
    if min(a.shape[-2:]) < window:
        raise ValueError(f"images smaller than the {window}x{window} SSIM window")
    win = gaussian_window(window, sigma)
    return float(np.mean([_ssim_plane(x, y, peak, win) for x, y in zip(a, b)]))
