"""
Wave-optics PSF simulation
==========================

Scalar-diffraction model of a point source at distance ``d1`` illuminating the
programmable mask, followed by band-limited angular-spectrum propagation over
the mask-to-sensor gap ``d2``. The intensity at the sensor, cropped and box
averaged to sensor resolution, is the PSF for one color channel.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy import fft

from .mask import MaskPattern, MaskSpec

__all__ = [
    "OpticsConfig",
    "ComplexField",
    "Psf",
    "SamplingError",
    "RGB_WAVELENGTHS",
    "DESK_OPTICS",
    "PROTOTYPE_OPTICS",
    "build_aperture",
    "spherical_wavefront",
    "free_space_transfer",
    "propagate",
    "simulate_psf",
    "normalize_psf",
    "delta_psf",
]

# R, G, B as for the LCD color filters
RGB_WAVELENGTHS = (640e-9, 550e-9, 460e-9)
NORMALIZATIONS = ("unit-sum", "unit-peak", "raw")


class SamplingError(ValueError):
    """The simulation grid cannot represent the mask adequately."""


@dataclass(frozen=True)
class OpticsConfig:
    """
    Parameters
    ----------
    d1 : float
        Scene (point source) to mask distance [m].
    d2 : float
        Mask to sensor distance [m].
    wavelengths : tuple of float
        One wavelength per color channel [m].
    grid_size : int
        Side of the square simulation grid [samples].
    grid_pitch : float
        Sampling pitch of the simulation grid [m].
    sensor_size : int
        Side of the output PSF [samples]; the grid is box averaged down to it.
    """

    d1: float = 0.30
    d2: float = 2e-3
    wavelengths: tuple = RGB_WAVELENGTHS
    grid_size: int = 1024
    grid_pitch: float = 0.015e-3
    sensor_size: int = 256

    def __post_init__(self):
        object.__setattr__(self, "wavelengths", tuple(float(w) for w in self.wavelengths))
        if self.d1 <= 0 or self.d2 <= 0:
            raise ValueError("d1 and d2 must be positive")
        if not self.wavelengths or min(self.wavelengths) <= 0:
            raise ValueError("need at least one positive wavelength")
        if not self.grid_size >= self.sensor_size >= 8:
            raise ValueError("require grid_size >= sensor_size >= 8")
        if self.grid_pitch <= 0:
            raise ValueError("grid_pitch must be positive")

    @property
    def n_channels(self) -> int:
        return len(self.wavelengths)

    @property
    def sensor_pitch(self) -> float:
        return self.grid_pitch * (self.grid_size // self.sensor_size)

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        """Sample positions (y column, x row) with the origin at index ``grid_size // 2``."""
        r = (np.arange(self.grid_size) - self.grid_size // 2) * self.grid_pitch
        return r[:, None], r[None, :]

    def frequencies(self) -> tuple[np.ndarray, np.ndarray]:
        """Spatial frequencies in FFT (unshifted) order."""
        u = fft.fftfreq(self.grid_size, d=self.grid_pitch)
        return u[:, None], u[None, :]

    def to_dict(self) -> dict:
        return {
            "d1": self.d1,
            "d2": self.d2,
            "wavelengths": list(self.wavelengths),
            "grid_size": self.grid_size,
            "grid_pitch": self.grid_pitch,
            "sensor_size": self.sensor_size,
        }


# 1404 sub-pixel RGB mask: 312 x 216 samples at pitch / 4, zero padded to 1024.
PROTOTYPE_OPTICS = OpticsConfig()

# 12 x 16 monochrome mask at 0.18 mm: 48 x 64 samples, padded to 128, PSF 64 x 64.
DESK_OPTICS = OpticsConfig(
    wavelengths=(550e-9,), grid_size=128, grid_pitch=0.045e-3, sensor_size=64
)


@dataclass(frozen=True, eq=False)
class ComplexField:
    values: np.ndarray = field(repr=False)
    pitch: float

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError(f"field must be a square 2D grid, got shape {v.shape}")

    @property
    def energy(self) -> float:
        return float(np.sum(np.abs(self.values) ** 2))


@dataclass(frozen=True, eq=False)
class Psf:
    """Per-channel intensity PSF, shape ``(C, S, S)``."""

    planes: np.ndarray = field(repr=False)
    normalization: str = "unit-sum"

    def __post_init__(self):
        p = np.asarray(self.planes, dtype=np.float64)
        if p.ndim == 2:
            p = p[None]
        if p.ndim != 3:
            raise ValueError(f"PSF planes must be (C, H, W), got shape {p.shape}")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("PSF must be finite and non-negative")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"unknown normalization {self.normalization!r}")
        p = p.copy()
        p.setflags(write=False)
        object.__setattr__(self, "planes", p)

    @property
    def n_channels(self) -> int:
        return self.planes.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.planes.shape[1:]

    def fingerprint(self) -> str:
        return hashlib.sha256(np.ascontiguousarray(self.planes).tobytes()).hexdigest()


def _channel_filter(spec: MaskSpec, channel: int) -> np.ndarray:
    """Boolean per sub-pixel: does it transmit in ``channel``?"""
    if spec.subpixels_per_pixel == 1:
        return np.ones(spec.n_subpixels, dtype=bool)
    color = np.arange(spec.n_subpixels) % spec.subpixels_per_pixel
    return color == channel


def build_aperture(
    spec: MaskSpec, pattern: MaskPattern, channel: int, cfg: OpticsConfig
) -> ComplexField:
    """
    Rasterize the mask transmission for one color channel.

    Each sub-pixel contributes its transmission over a rectangle scaled by the
    fill factor and centered in its cell; a grid sample belongs to a
    rectangle when its position falls inside it. Sub-pixels whose color
    filter does not match ``channel`` are opaque.
    """
    if pattern.spec != spec:
        raise ValueError("pattern does not belong to this mask spec")
    if not 0 <= channel < cfg.n_channels:
        raise IndexError(f"channel {channel} out of range for {cfg.n_channels} channels")
    if spec.subpixels_per_pixel == 3 and cfg.n_channels != 3:
        raise ValueError("RGB mask requires three wavelengths")
    height, width = spec.extent
    grid_extent = cfg.grid_size * cfg.grid_pitch
    if height > grid_extent or width > grid_extent:
        raise SamplingError(
            f"mask extent {width:.3g} x {height:.3g} m exceeds the grid ({grid_extent:.3g} m)"
        )

    y, x = cfg.coordinates()
    y = y.ravel()
    x = x.ravel()
    n_sub_rows = spec.rows
    n_sub_cols = spec.cols * spec.subpixels_per_pixel

    # cell index and position within the cell for every sample
    fy = (y + height / 2) / spec.pitch_y
    fx = (x + width / 2) / spec.pitch_x
    iy = np.floor(fy).astype(int)
    ix = np.floor(fx).astype(int)
    margin_y = (1 - np.sqrt(spec.fill_factor)) / 2
    margin_x = margin_y
    in_y = (iy >= 0) & (iy < n_sub_rows) & (np.abs(fy - iy - 0.5) < 0.5 - margin_y + 1e-12)
    in_x = (ix >= 0) & (ix < n_sub_cols) & (np.abs(fx - ix - 0.5) < 0.5 - margin_x + 1e-12)

    trans = np.where(_channel_filter(spec, channel), pattern.transmission, 0.0)
    trans = trans.reshape(n_sub_rows, n_sub_cols)
    out = np.zeros((cfg.grid_size, cfg.grid_size))
    rows = np.flatnonzero(in_y)
    cols = np.flatnonzero(in_x)
    out[np.ix_(rows, cols)] = trans[np.ix_(iy[rows], ix[cols])]
    return ComplexField(out.astype(np.complex128), cfg.grid_pitch)


def spherical_wavefront(cfg: OpticsConfig, channel: int) -> ComplexField:
    """Unit-amplitude spherical wave from an on-axis point at distance ``d1``."""
    wv = cfg.wavelengths[channel]
    y, x = cfg.coordinates()
    r = np.sqrt(x**2 + y**2 + cfg.d1**2)
    return ComplexField(np.exp(1j * 2 * np.pi / wv * r), cfg.grid_pitch)


def free_space_transfer(cfg: OpticsConfig, z: float, channel: int) -> np.ndarray:
    """
    Band-limited angular-spectrum transfer function, in FFT order.

    Propagating frequencies get ``exp(j 2 pi z sqrt(1/wv^2 - |u|^2))``,
    evanescent ones are zeroed, and each axis is cut at
    ``1 / (wv sqrt((2 du z)^2 + 1))`` where ``du`` is the frequency step of
    the grid, so the chirp of the transfer function stays sampled.
    """
    if z < 0:
        raise ValueError("propagation distance must be non-negative")
    wv = cfg.wavelengths[channel]
    v, u = cfg.frequencies()
    arg = 1.0 / wv**2 - u**2 - v**2
    propagating = arg >= 0
    H = np.where(propagating, np.exp(1j * 2 * np.pi * z * np.sqrt(np.maximum(arg, 0.0))), 0)
    du = 1.0 / (cfg.grid_size * cfg.grid_pitch)
    u_limit = 1.0 / (wv * np.sqrt((2 * du * z) ** 2 + 1))
    band = (np.abs(u) <= u_limit) & (np.abs(v) <= u_limit)
    return np.where(band, H, 0)


def propagate(u_in: ComplexField, cfg: OpticsConfig, z: float, channel: int) -> ComplexField:
    H = free_space_transfer(cfg, z, channel)
    return ComplexField(fft.ifft2(fft.fft2(u_in.values) * H), u_in.pitch)


def _box_downsample(intensity: np.ndarray, sensor_size: int) -> np.ndarray:
    n = intensity.shape[0]
    factor = n // sensor_size
    side = factor * sensor_size
    start = (n - side) // 2
    crop = intensity[start : start + side, start : start + side]
    return crop.reshape(sensor_size, factor, sensor_size, factor).mean(axis=(1, 3))


def normalize_psf(planes: np.ndarray, normalization: str) -> np.ndarray:
    planes = np.asarray(planes, dtype=np.float64)
    if normalization == "raw":
        return planes
    if normalization == "unit-sum":
        scale = planes.sum(axis=(-2, -1), keepdims=True)
    elif normalization == "unit-peak":
        scale = planes.max(axis=(-2, -1), keepdims=True)
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    # all-dark channels stay zero
    return np.divide(planes, scale, out=np.zeros_like(planes), where=scale > 0)


def simulate_psf(
    spec: MaskSpec,
    pattern: MaskPattern,
    cfg: OpticsConfig,
    normalization: str = "unit-sum",
) -> Psf:
    """
    Simulate the per-channel intensity PSF of the mask.

    Per channel: aperture times spherical wavefront, angular-spectrum
    propagation over ``d2``, squared magnitude, centered crop and box
    averaging down to ``sensor_size``, then normalization.
    """
    if min(spec.pitch_x, spec.pitch_y) < cfg.grid_pitch:
        raise SamplingError("grid pitch is coarser than the smallest mask sub-pixel")
    height, width = spec.extent
    if cfg.grid_size * cfg.grid_pitch < 2 * max(height, width) * (1 - 1e-9):
        raise SamplingError("grid must be zero padded to at least twice the mask extent")
    planes = []
    for c in range(cfg.n_channels):
        aperture = build_aperture(spec, pattern, c, cfg)
        u0 = ComplexField(aperture.values * spherical_wavefront(cfg, c).values, cfg.grid_pitch)
        u1 = propagate(u0, cfg, cfg.d2, c)
        intensity = np.abs(u1.values) ** 2
        planes.append(_box_downsample(intensity, cfg.sensor_size))
    return Psf(normalize_psf(np.stack(planes), normalization), normalization)


def delta_psf(size: int, channels: int = 1) -> Psf:
    """Unit impulse at the center of a ``size x size`` plane."""
    p = np.zeros((channels, size, size))
    p[:, size // 2, size // 2] = 1.0
    return Psf(p, "unit-sum")
