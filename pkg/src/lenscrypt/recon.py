"""
Decoders
========

Recover the scene from a measurement and a candidate PSF by solving

    min_X  1/2 ||Y - crop(P * X)||^2 + lambda R(X)

per color channel. All solvers work on the ``(2H, 2W)`` zero-padded grid of
:func:`lenscrypt.forward.padded_otf`, so the estimate is free to extend beyond
the measured window and circular wrap-around never leaks into it.

-  :func:`wiener_decode` / :func:`l2_decode`: Fourier-domain closed forms.
-  :func:`admm_decode`: ADMM with anisotropic total variation and a
   non-negativity constraint; the crop is handled by its own splitting
   variable so the data term stays diagonal.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import fft

from .forward import Measurement, forward_channel, padded_otf
from .optics import Psf

__all__ = [
    "IllPosedError",
    "DivergenceError",
    "AdmmParams",
    "DecodeResult",
    "Decoder",
    "fourier_solve",
    "wiener_decode",
    "l2_decode",
    "admm_decode",
    "decode",
    "data_fidelity",
]


class IllPosedError(ValueError):
    """Unregularized inversion of a PSF whose transfer function vanishes."""


class DivergenceError(RuntimeError):
    """ADMM data fidelity blew up."""


@dataclass(frozen=True)
class AdmmParams:
    """
    Parameters
    ----------
    iterations : int
        Maximum number of ADMM iterations.
    rho : float
        Penalty weight shared by the three splitting constraints.
    tv_weight : float
        TV weight, relative to the measurement maximum.
    nonneg : bool
        Enforce a non-negative estimate.
    tolerance : float, optional
        Stop once the relative primal residual drops below this value.
    """

    iterations: int = 100
    # from scripts/grid_search_admm.py at desk scale
    rho: float = 3e-3
    tv_weight: float = 1e-4
    nonneg: bool = True
    tolerance: float | None = None

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.tv_weight < 0:
            raise ValueError("tv_weight must be non-negative")


@dataclass(frozen=True, eq=False)
class DecodeResult:
    image: np.ndarray = field(repr=False)
    data_fidelity: float
    iterations_run: int


@dataclass(frozen=True)
class Decoder:
    """Decoder selection and its parameters, as used by sweeps and authentication."""

    kind: str = "admm"
    noise_floor: float = 1e-4
    lam: float = 1e-4
    admm: AdmmParams = AdmmParams()

    def __post_init__(self):
        if self.kind not in ("wiener", "l2", "admm"):
            raise ValueError(f"unknown decoder {self.kind!r}")

    def __call__(self, meas: Measurement, psf: Psf) -> DecodeResult:
        return decode(meas, psf, self)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "noise_floor": self.noise_floor,
            "lam": self.lam,
            "admm": dict(self.admm.__dict__),
        }


def _check(meas: Measurement, psf: Psf):
    if meas.shape[0] != psf.n_channels or meas.shape[1:] != psf.shape:
        raise ValueError(
            f"measurement {meas.shape} incompatible with PSF {(psf.n_channels, *psf.shape)}"
        )


def _embed(y: np.ndarray) -> np.ndarray:
    h, w = y.shape
    out = np.zeros((2 * h, 2 * w))
    out[:h, :w] = y
    return out


def data_fidelity(meas: Measurement, psf: Psf, image: np.ndarray) -> float:
    """``1/2 ||Y - crop(P * X)||^2`` summed over channels."""
    total = 0.0
    for y, p, x in zip(meas.data, psf.planes, image):
        r = y - forward_channel(padded_otf(p), x)
        total += 0.5 * float(np.sum(r**2))
    return total


def fourier_solve(y: np.ndarray, otf: np.ndarray, floor: float) -> np.ndarray:
    """
    ``F^-1( conj(K) F(y_pad) / (|K|^2 + floor) )`` on the padded grid.

    Returns the full padded estimate, uncropped and unclamped.
    """
    h, w = y.shape
    abs2 = np.abs(otf) ** 2
    if floor == 0 and abs2.min() <= 1e-14 * max(abs2.max(), np.finfo(float).tiny):
        raise IllPosedError("transfer function vanishes and no noise floor is given")
    spec = np.conj(otf) * fft.rfft2(_embed(y)) / (abs2 + floor)
    return fft.irfft2(spec, s=(2 * h, 2 * w))


def wiener_decode(meas: Measurement, psf: Psf, noise_floor: float) -> DecodeResult:
    """Wiener deconvolution with a constant noise-to-signal floor."""
    if noise_floor < 0:
        raise ValueError("noise_floor must be >= 0")
    _check(meas, psf)
    h, w = psf.shape
    est = np.stack(
        [fourier_solve(y, padded_otf(p), noise_floor)[:h, :w] for y, p in zip(meas.data, psf.planes)]
    )
    est = np.clip(est, 0.0, 1.0)
    return DecodeResult(est, data_fidelity(meas, psf, est), 1)


def l2_decode(meas: Measurement, psf: Psf, lam: float) -> DecodeResult:
    """Tikhonov-regularized closed form; identical to Wiener with ``noise_floor = lam``."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    return wiener_decode(meas, psf, lam)


def _soft(v: np.ndarray, t: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _grad(x: np.ndarray) -> np.ndarray:
    return np.stack([x - np.roll(x, 1, axis=0), x - np.roll(x, 1, axis=1)])


def _grad_adj(g: np.ndarray) -> np.ndarray:
    return (g[0] - np.roll(g[0], -1, axis=0)) + (g[1] - np.roll(g[1], -1, axis=1))


def _grad_gram(shape: tuple[int, int]) -> np.ndarray:
    # Fourier symbol of grad^T grad (periodic Laplacian) for rfft2 layout
    d = np.zeros(shape)
    d[0, 0] = 4.0
    d[1, 0] = d[-1, 0] = d[0, 1] = d[0, -1] = -1.0
    return np.real(fft.rfft2(d))


def _admm_channel(y: np.ndarray, otf: np.ndarray, params: AdmmParams):
    h, w = y.shape
    shape = (2 * h, 2 * w)
    mu = params.rho
    tau = params.tv_weight * float(y.max())

    def H(v):
        return fft.irfft2(otf * fft.rfft2(v), s=shape)

    def Ht(v):
        return fft.irfft2(np.conj(otf) * fft.rfft2(v), s=shape)

    crop_mask = np.zeros(shape)
    crop_mask[:h, :w] = 1.0
    cty = _embed(y)
    denom = mu * np.abs(otf) ** 2 + mu * _grad_gram(shape)
    if params.nonneg:
        denom = denom + mu
    # guard the DC bin of a dark PSF without TV/nonneg coupling
    denom = np.where(denom > 0, denom, 1.0)

    x = np.zeros(shape)
    Hx = np.zeros(shape)
    Gx = np.zeros((2,) + shape)
    alpha1 = np.zeros(shape)
    alpha2 = np.zeros((2,) + shape)
    alpha3 = np.zeros(shape)
    history = []
    it = 0
    for it in range(1, params.iterations + 1):
        u = _soft(Gx + alpha2 / mu, tau / mu)
        xi = (cty + alpha1 + mu * Hx) / (crop_mask + mu)
        rhs = Ht(mu * xi - alpha1) + _grad_adj(mu * u - alpha2)
        if params.nonneg:
            wv = np.maximum(x + alpha3 / mu, 0.0)
            rhs = rhs + mu * wv - alpha3
        x = fft.irfft2(fft.rfft2(rhs) / denom, s=shape)

        Hx = H(x)
        Gx = _grad(x)
        r1 = Hx - xi
        r2 = Gx - u
        alpha1 += mu * r1
        alpha2 += mu * r2
        primal = np.sum(r1**2) + np.sum(r2**2)
        if params.nonneg:
            r3 = x - wv
            alpha3 += mu * r3
            primal += np.sum(r3**2)

        df = 0.5 * float(np.sum((y - Hx[:h, :w]) ** 2))
        history.append(df)
        if it > 10 and history[-11] > 0 and df > 10 * history[-11]:
            raise DivergenceError(
                f"data fidelity grew from {history[-11]:.3g} to {df:.3g} over 10 iterations "
                f"(iteration {it}); try a larger rho"
            )
        if params.tolerance is not None:
            scale = max(float(np.linalg.norm(x)), 1e-12)
            if np.sqrt(primal) / scale < params.tolerance:
                break
    est = np.maximum(x, 0.0) if params.nonneg else x
    return est[:h, :w], it


def admm_decode(meas: Measurement, psf: Psf, params: AdmmParams | None = None) -> DecodeResult:
    """
    ADMM for TV-regularized, non-negative deconvolution with a cropped sensor.

    Splits ``xi = P * x`` (solved pointwise against the cropped data),
    ``u = grad x`` (soft thresholding) and ``w = x`` (projection onto
    ``x >= 0``); the ``x`` update is diagonal in the Fourier domain.
    """
    params = params or AdmmParams()
    _check(meas, psf)
    planes, iters = [], 0
    for y, p in zip(meas.data, psf.planes):
        est, n = _admm_channel(y, padded_otf(p), params)
        planes.append(est)
        iters = max(iters, n)
    est = np.clip(np.stack(planes), 0.0, 1.0)
    return DecodeResult(est, data_fidelity(meas, psf, est), iters)


def decode(meas: Measurement, psf: Psf, decoder: Decoder) -> DecodeResult:
    if decoder.kind == "wiener":
        return wiener_decode(meas, psf, decoder.noise_floor)
    if decoder.kind == "l2":
        return l2_decode(meas, psf, decoder.lam)
    return admm_decode(meas, psf, decoder.admm)
