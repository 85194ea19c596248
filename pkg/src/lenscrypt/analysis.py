"""
Encryption-strength analysis
============================

Key-space arithmetic for a mask with ``N`` sub-pixels of ``base`` levels each,
the error incurred by decoding with a mismatched system, and the brute-force
sweep that perturbs a growing share of the key.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats

from .forward import Measurement, NoiseModel, encrypt
from .mask import MaskPattern, fraction_correct, perturb
from .metrics import psnr, ssim
from .optics import OpticsConfig, Psf, simulate_psf
from .recon import Decoder

__all__ = [
    "KeyspaceBound",
    "keyspace_bound",
    "effective_key_length",
    "relative_psf_error",
    "MismatchResult",
    "SpectralRadiusError",
    "mismatch_series",
    "random_mismatch_system",
    "SweepRecord",
    "bruteforce_sweep",
    "summarize_sweep",
    "linear_fit_r2",
    "spearman",
    "STANDARD_FRACTIONS",
]

# fraction of the key perturbed: 0%, 10%, ..., 100%
STANDARD_FRACTIONS = tuple(round(0.1 * i, 1) for i in range(11))


class KeyspaceBound(NamedTuple):
    ratio: float
    over_capacity: bool


def keyspace_bound(key_bits: float, base: int, n: int) -> KeyspaceBound:
    """
    Minimum share ``W`` of correct sub-pixels so that ``base^(N W) >= 2^K``.

    ``W = K log_base(2) / N``. ``base`` is the number of levels a sub-pixel
    can take. When ``K`` exceeds the capacity ``N log2(base)`` the ratio is
    clamped to 1 and ``over_capacity`` is set.
    """
    if key_bits < 0:
        raise ValueError("key length must be non-negative")
    if base < 2:
        raise ValueError("need at least two levels per sub-pixel")
    if n < 1:
        raise ValueError("need at least one sub-pixel")
    w = key_bits * math.log(2, base) / n
    if w > 1:
        return KeyspaceBound(1.0, True)
    return KeyspaceBound(w, False)


def effective_key_length(ratio: float, base: int, n: int) -> int:
    """Binary key length equivalent to guessing ``ratio * N`` sub-pixels of ``base`` levels."""
    if not 0 < ratio <= 1:
        raise ValueError(f"ratio must be in (0, 1], got {ratio}")
    if base < 2:
        raise ValueError("need at least two levels per sub-pixel")
    return int(math.floor(ratio * n * math.log2(base)))


def relative_psf_error(true_psf: Psf, candidate_psf: Psf, squared: bool = True) -> float:
    """
    Relative deviation of a candidate PSF over all channels.

    By default the energy ratio ``||P - P'||^2 / ||P||^2``, which grows
    linearly with the share of perturbed sub-pixels. ``squared=False`` gives
    the plain norm ratio ``||P - P'|| / ||P||``, which grows like its square
    root.
    """
    p = true_psf.planes
    q = candidate_psf.planes
    if p.shape != q.shape:
        raise ValueError(f"PSF shapes differ: {p.shape} vs {q.shape}")
    if true_psf.normalization != candidate_psf.normalization:
        raise ValueError("PSFs use different normalizations")
    ref = np.sum(p**2)
    if ref == 0:
        raise ValueError("reference PSF is identically zero")
    err = np.sum((p - q) ** 2) / ref
    return float(err if squared else np.sqrt(err))


# -- mismatched system ---------------------------------------------------------


class SpectralRadiusError(ValueError):
    """The Neumann series for the mismatched inverse does not converge."""


@dataclass(frozen=True)
class MismatchResult:
    direct: np.ndarray
    series: np.ndarray
    error_term: np.ndarray
    spectral_radius: float

    @property
    def relative_gap(self) -> float:
        return float(np.linalg.norm(self.direct - self.series) / np.linalg.norm(self.direct))


def mismatch_series(
    H: np.ndarray, delta: np.ndarray, x: np.ndarray, noise: np.ndarray, k_max: int
) -> MismatchResult:
    """
    Decode ``y = H x + n`` with the wrong system ``H - delta``, two ways.

    ``direct`` solves ``(H - delta) x' = y``. ``series`` expands the inverse
    as ``v + sum_{k=1..k_max} (H^-1 delta)^k v`` with ``v = x + H^-1 n``;
    the sum is returned separately as ``error_term``.
    """
    H = np.asarray(H, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if k_max < 0:
        raise ValueError("k_max must be non-negative")
    A = np.linalg.solve(H, delta)
    rho = float(np.max(np.abs(np.linalg.eigvals(A)))) if A.size else 0.0
    if rho >= 1:
        raise SpectralRadiusError(
            f"spectral radius of H^-1 Delta is {rho:.4f} >= 1; the series diverges"
        )
    v = x + np.linalg.solve(H, noise)
    term = v
    err = np.zeros_like(v)
    for _ in range(k_max):
        term = A @ term
        err = err + term
    direct = np.linalg.solve(H - delta, H @ x + noise)
    return MismatchResult(direct=direct, series=v + err, error_term=err, spectral_radius=rho)


def random_mismatch_system(rng: np.random.Generator, n: int, radius: float):
    """
    Random test system ``(H, Delta, x, noise)`` with ``||H^-1 Delta||_2 = radius``.

    ``H = 3 I + N(0, 1)`` is well conditioned; the operator-norm scaling bounds
    the spectral radius by ``radius`` so the series converges at least
    geometrically.
    """
    H = 3 * np.eye(n) + rng.standard_normal((n, n))
    D = rng.standard_normal((n, n))
    D *= radius / np.linalg.norm(np.linalg.solve(H, D), 2)
    return H, D, rng.standard_normal(n), 0.01 * rng.standard_normal(n)


# -- brute-force sweep -----------------------------------------------------------


@dataclass(frozen=True)
class SweepRecord:
    fraction_correct: float
    psnr_db: float
    ssim: float
    relative_psf_error: float
    seed: int
    decoder: str
    scene_index: int = 0
    error: str = ""

    def __post_init__(self):
        if not 0 <= self.fraction_correct <= 1:
            raise ValueError("fraction_correct must be in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


def _trial_seed(master: int, i_frac: int, trial: int) -> int:
    return int(np.random.SeedSequence([master, i_frac, trial]).generate_state(1)[0])


def bruteforce_sweep(
    scenes: Sequence[np.ndarray],
    key: MaskPattern,
    fractions: Sequence[float],
    trials_per_point: int,
    decoder: Decoder,
    optics: OpticsConfig,
    noise: NoiseModel | None = None,
    seed: int = 0,
    threads: int = 1,
) -> list[SweepRecord]:
    """
    Decode true ciphertexts with progressively corrupted keys.

    ``fractions`` are shares of the key that are perturbed. For every
    fraction and trial, the key is perturbed, the candidate PSF simulated and
    the ciphertext of scene ``trial % len(scenes)`` (captured with the true
    key) decoded with it. A failing decode yields a NaN record carrying the
    error message instead of aborting the sweep. Records come back ordered by
    fraction, then trial.
    """
    if not scenes or not fractions or trials_per_point < 1:
        raise ValueError("sweep needs scenes, fractions and at least one trial")
    noise = noise or NoiseModel()
    spec = key.spec
    true_psf = simulate_psf(spec, key, optics)
    ciphertexts = [
        encrypt(s, true_psf, NoiseModel(noise.snr_db, noise.quantization_bits, seed=noise.seed + i))
        for i, s in enumerate(scenes)
    ]

    def run(job):
        i_frac, frac, trial = job
        s = _trial_seed(seed, i_frac, trial)
        idx = trial % len(scenes)
        cand = perturb(key, frac, s)
        fc = fraction_correct(cand, key)
        try:
            psf = simulate_psf(spec, cand, optics)
            err = relative_psf_error(true_psf, psf)
            res = decoder(ciphertexts[idx], psf)
            return SweepRecord(
                fc, psnr(res.image, scenes[idx]), ssim(res.image, scenes[idx]), err, s, decoder.kind, idx
            )
        except (ValueError, RuntimeError, FloatingPointError) as exc:
            nan = float("nan")
            return SweepRecord(fc, nan, nan, nan, s, decoder.kind, idx, error=str(exc))

    jobs = [(i, f, t) for i, f in enumerate(fractions) for t in range(trials_per_point)]
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(run, jobs))
    return [run(j) for j in jobs]


def summarize_sweep(records: Sequence[SweepRecord]) -> list[dict]:
    """Mean and standard deviation of each metric per fraction_correct, ascending."""
    out = []
    for fc in sorted({r.fraction_correct for r in records}):
        rows = [r for r in records if r.fraction_correct == fc and not r.error]
        row = {"fraction_correct": fc, "n": len(rows)}
        for name in ("psnr_db", "ssim", "relative_psf_error"):
            vals = np.array([getattr(r, name) for r in rows], dtype=float)
            row[f"{name}_mean"] = float(vals.mean()) if vals.size else float("nan")
            row[f"{name}_std"] = float(vals.std()) if vals.size else float("nan")
        out.append(row)
    return out


def linear_fit_r2(x, y) -> float:
    """Coefficient of determination of a least-squares line through ``(x, y)``."""
    return float(stats.linregress(x, y).rvalue ** 2)


def spearman(x, y) -> float:
    return float(stats.spearmanr(x, y).statistic)
