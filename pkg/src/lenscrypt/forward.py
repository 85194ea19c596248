"""
Optical encryption channel: PSF convolution plus sensor noise.

Conventions shared with :mod:`lenscrypt.recon`: images are ``(C, H, W)``
arrays; the PSF plane has the same ``H x W`` size as the scene and the
"same"-size output of the linear convolution is anchored at the PSF's
(rounded) center of mass, so a centered delta PSF is the identity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import fft

from .optics import Psf

__all__ = [
    "NoiseModel",
    "Measurement",
    "as_scene",
    "psf_origin",
    "padded_otf",
    "convolve",
    "forward_channel",
    "encrypt",
]


@dataclass(frozen=True)
class NoiseModel:
    """
    Additive white Gaussian noise at a target SNR, optional quantization.

    ``snr_db=None`` disables noise and ``quantization_bits=None`` disables
    quantization.
    """

    snr_db: float | None = None
    quantization_bits: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.snr_db is not None and not np.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite")
        if self.quantization_bits is not None and self.quantization_bits < 1:
            raise ValueError("quantization_bits must be >= 1")


@dataclass(frozen=True, eq=False)
class Measurement:
    """Lensless measurement (ciphertext), shape ``(C, H, W)``."""

    data: np.ndarray = field(repr=False)
    snr_db: float | None = None
    seed: int | None = None
    psf_fingerprint: str = ""

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim == 2:
            d = d[None]
        if d.ndim != 3:
            raise ValueError(f"measurement must be (C, H, W), got shape {d.shape}")
        if not np.all(np.isfinite(d)) or np.any(d < 0):
            raise ValueError("measurement must be finite and non-negative")
        d = d.copy()
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


def as_scene(image) -> np.ndarray:
    """Coerce to a ``(C, H, W)`` float array clamped to [0, 1]."""
    x = np.asarray(image, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3:
        raise ValueError(f"scene must be (H, W) or (C, H, W), got shape {x.shape}")
    return np.clip(x, 0.0, 1.0)


def psf_origin(plane: np.ndarray) -> tuple[int, int]:
    """Rounded center of mass of a PSF plane; geometric center if empty."""
    plane = np.asarray(plane, dtype=np.float64)
    total = plane.sum()
    h, w = plane.shape
    if total <= 0:
        return h // 2, w // 2
    cy = (plane.sum(axis=1) @ np.arange(h)) / total
    cx = (plane.sum(axis=0) @ np.arange(w)) / total
    return int(np.clip(np.round(cy), 0, h - 1)), int(np.clip(np.round(cx), 0, w - 1))


def padded_otf(plane: np.ndarray) -> np.ndarray:
    """
    Transfer function of the PSF on the ``(2H, 2W)`` padded grid.

    The PSF is zero padded and rolled so its origin sits at index (0, 0).
    With the scene embedded at the top-left corner of the padded grid, the
    circular convolution restricted to ``[:H, :W]`` equals the "same"-size
    linear convolution.
    """
    plane = np.asarray(plane, dtype=np.float64)
    h, w = plane.shape
    cy, cx = psf_origin(plane)
    k = np.zeros((2 * h, 2 * w))
    k[:h, :w] = plane
    k = np.roll(k, (-cy, -cx), axis=(0, 1))
    return fft.rfft2(k)


def _embed(x: np.ndarray) -> np.ndarray:
    h, w = x.shape
    out = np.zeros((2 * h, 2 * w))
    out[:h, :w] = x
    return out


def forward_channel(otf: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Apply a padded-grid OTF (see :func:`padded_otf`) to one ``H x W`` plane."""
    h, w = x.shape
    full = fft.irfft2(otf * fft.rfft2(_embed(x)), s=(2 * h, 2 * w))
    return full[:h, :w]


def convolve(psf_plane: np.ndarray, image_plane: np.ndarray) -> np.ndarray:
    """Linear 2D convolution, "same" size, origin at the PSF center of mass."""
    psf_plane = np.asarray(psf_plane, dtype=np.float64)
    image_plane = np.asarray(image_plane, dtype=np.float64)
    if psf_plane.shape != image_plane.shape or psf_plane.ndim != 2:
        raise ValueError(
            f"PSF and image must be 2D of equal size, got {psf_plane.shape} and {image_plane.shape}"
        )
    return forward_channel(padded_otf(psf_plane), image_plane)


def encrypt(scene, psf: Psf, noise: NoiseModel | None = None) -> Measurement:
    """
    Capture ``scene`` through the mask: convolve each channel with its PSF,
    add white Gaussian noise at ``noise.snr_db``, clamp at zero and optionally
    quantize.

    The noise variance is ``mean(signal^2) / 10^(snr_db / 10)`` per channel.
    Quantization clips to [0, 1] and rounds to ``2^bits - 1`` steps.
    """
    noise = noise or NoiseModel()
    x = as_scene(scene)
    if x.shape[0] != psf.n_channels:
        raise ValueError(f"scene has {x.shape[0]} channels, PSF has {psf.n_channels}")
    if x.shape[1:] != psf.shape:
        raise ValueError(f"scene size {x.shape[1:]} does not match PSF size {psf.shape}")

    y = np.stack([convolve(p, xc) for p, xc in zip(psf.planes, x)])
    if noise.snr_db is not None:
        rng = np.random.default_rng(noise.seed)
        power = np.mean(y**2, axis=(1, 2), keepdims=True)
        sigma = np.sqrt(power / 10 ** (noise.snr_db / 10))
        y = y + sigma * rng.standard_normal(y.shape)
    y = np.maximum(y, 0.0)
    if noise.quantization_bits is not None:
        levels = 2**noise.quantization_bits - 1
        y = np.round(np.clip(y, 0.0, 1.0) * levels) / levels
    return Measurement(y, snr_db=noise.snr_db, seed=noise.seed, psf_fingerprint=psf.fingerprint())
