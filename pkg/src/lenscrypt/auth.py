"""
Authentication with mask fingerprints
=====================================

A measurement is scored against candidate mask patterns: the pattern that was
on the mask at capture time decodes the measurement consistently, others do
not. Scores either need only the measurement (data fidelity) or compare the
decode with a co-registered lensed image (MSE, SSIM).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .forward import Measurement, as_scene, forward_channel, padded_otf
from .mask import MaskPattern
from .metrics import mse, ssim
from .optics import OpticsConfig, Psf, simulate_psf
from .recon import Decoder

__all__ = [
    "SCORE_KINDS",
    "LOWER_IS_AUTHENTIC",
    "AuthScore",
    "RocCurve",
    "ConfusionMatrix",
    "PsfCache",
    "auth_data_fidelity",
    "auth_reference",
    "score",
    "score_all",
    "best_index",
    "identify",
    "roc",
    "auc_mann_whitney",
    "confusion",
]

SCORE_KINDS = ("data_fidelity", "mse_ref", "ssim_ref")
LOWER_IS_AUTHENTIC = {"data_fidelity": True, "mse_ref": True, "ssim_ref": False}


@dataclass(frozen=True)
class AuthScore:
    candidate_id: int
    score_kind: str
    value: float
    lower_is_authentic: bool

    def __post_init__(self):
        if self.score_kind not in SCORE_KINDS:
            raise ValueError(f"unknown score kind {self.score_kind!r}")
        if not np.isfinite(self.value):
            raise ValueError(f"non-finite {self.score_kind} score")

    def better_than(self, other: "AuthScore") -> bool:
        if self.lower_is_authentic:
            return self.value < other.value
        return self.value > other.value


class PsfCache:
    """
    PSFs keyed by pattern, so repeated scoring does not re-simulate.

    ``known`` pre-loads PSFs for specific patterns, e.g. calibrated
    measurements of a physical mask; other patterns are simulated on demand.
    """

    def __init__(self, optics: OpticsConfig, known: dict[MaskPattern, Psf] | None = None):
        self.optics = optics
        self._psfs: dict[MaskPattern, Psf] = dict(known or {})

    def __call__(self, pattern: MaskPattern) -> Psf:
        psf = self._psfs.get(pattern)
        if psf is None:
            psf = simulate_psf(pattern.spec, pattern, self.optics)
            self._psfs[pattern] = psf
        return psf


def _psf_for(candidate: MaskPattern, optics) -> Psf:
    if isinstance(optics, PsfCache):
        return optics(candidate)
    return simulate_psf(candidate.spec, candidate, optics)


def _residual(meas: Measurement, psf: Psf, est: np.ndarray) -> float:
    return sum(
        float(np.sum((y - forward_channel(padded_otf(p), x)) ** 2))
        for y, p, x in zip(meas.data, psf.planes, est)
    )


def _reference_score(kind: str, est: np.ndarray, lensed, shape, candidate_id: int) -> AuthScore:
    ref = as_scene(lensed)
    if ref.shape != shape:
        raise ValueError(f"lensed image {ref.shape} does not match measurement {shape}")
    if kind == "mse_ref":
        return AuthScore(candidate_id, kind, mse(est, ref), True)
    return AuthScore(candidate_id, kind, ssim(est, ref), False)


def auth_data_fidelity(
    meas: Measurement,
    candidate: MaskPattern,
    decoder: Decoder,
    optics,
    candidate_id: int = 0,
) -> AuthScore:
    """
    ``||Y - P' * dec(Y, P')||^2`` for the candidate's PSF ``P'``.

    The re-encryption is noiseless. ``optics`` is an :class:`OpticsConfig` or a
    :class:`PsfCache`.
    """
    psf = _psf_for(candidate, optics)
    est = decoder(meas, psf).image
    return AuthScore(candidate_id, "data_fidelity", _residual(meas, psf, est), True)


def auth_reference(
    meas: Measurement,
    candidate: MaskPattern,
    lensed,
    metric: str,
    decoder: Decoder,
    optics,
    candidate_id: int = 0,
) -> AuthScore:
    """Compare the decode under the candidate key with the lensed image (``mse`` or ``ssim``)."""
    if metric not in ("mse", "ssim"):
        raise ValueError(f"metric must be 'mse' or 'ssim', got {metric!r}")
    est = decoder(meas, _psf_for(candidate, optics)).image
    return _reference_score(f"{metric}_ref", est, lensed, meas.shape, candidate_id)


def score_all(
    meas: Measurement,
    candidate: MaskPattern,
    score_kinds,
    decoder: Decoder,
    optics,
    lensed=None,
    candidate_id: int = 0,
) -> dict[str, AuthScore]:
    """Every requested score from a single decode."""
    for kind in score_kinds:
        if kind not in SCORE_KINDS:
            raise ValueError(f"unknown score kind {kind!r}")
        if kind != "data_fidelity" and lensed is None:
            raise ValueError(f"{kind} needs the lensed image")
    psf = _psf_for(candidate, optics)
    est = decoder(meas, psf).image
    out = {}
    for kind in score_kinds:
        if kind == "data_fidelity":
            out[kind] = AuthScore(candidate_id, kind, _residual(meas, psf, est), True)
        else:
            out[kind] = _reference_score(kind, est, lensed, meas.shape, candidate_id)
    return out


def score(
    meas: Measurement,
    candidate: MaskPattern,
    score_kind: str,
    decoder: Decoder,
    optics,
    lensed=None,
    candidate_id: int = 0,
) -> AuthScore:
    return score_all(meas, candidate, [score_kind], decoder, optics, lensed, candidate_id)[score_kind]


def best_index(scores: Sequence[AuthScore]) -> int:
    best = 0
    for i, s in enumerate(scores[1:], start=1):
        if s.better_than(scores[best]):
            best = i
    return best


def identify(
    meas: Measurement,
    candidates: Sequence[MaskPattern],
    score_kind: str,
    decoder: Decoder,
    optics,
    lensed=None,
    return_scores: bool = False,
):
    """
    Index of the candidate whose score is most authentic; ties go to the
    lowest index.
    """
    if len(candidates) < 2:
        raise ValueError("identification needs at least two candidates")
    scores = [
        score(meas, c, score_kind, decoder, optics, lensed=lensed, candidate_id=i)
        for i, c in enumerate(candidates)
    ]
    best = best_index(scores)
    return (best, scores) if return_scores else best


# -- detector evaluation -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RocCurve:
    """
    Thresholds sorted from most to least strict, with the true/false positive
    rates of accepting every score at least as authentic as the threshold.
    The first point is (0, 0) and the last (1, 1).
    """

    thresholds: np.ndarray = field(repr=False)
    tpr: np.ndarray = field(repr=False)
    fpr: np.ndarray = field(repr=False)
    auc: float


def roc(authentic_scores, impostor_scores, lower_is_authentic: bool = True) -> RocCurve:
    """ROC over every distinct score value; AUC by the trapezoid rule."""
    pos = np.asarray(authentic_scores, dtype=np.float64).ravel()
    neg = np.asarray(impostor_scores, dtype=np.float64).ravel()
    if pos.size == 0 or neg.size == 0:
        raise ValueError("need at least one authentic and one impostor score")
    # orient so larger means more authentic
    sp, sn = (-pos, -neg) if lower_is_authentic else (pos, neg)
    levels = np.unique(np.concatenate([sp, sn]))[::-1]
    tp = np.searchsorted(np.sort(sp), levels, side="left")
    fp = np.searchsorted(np.sort(sn), levels, side="left")
    tpr = np.concatenate([[0.0], (pos.size - tp) / pos.size])
    fpr = np.concatenate([[0.0], (neg.size - fp) / neg.size])
    thresholds = np.concatenate([[np.inf], levels])
    if lower_is_authentic:
        thresholds = -thresholds
    auc = float(np.trapezoid(tpr, fpr))
    return RocCurve(thresholds, tpr, fpr, auc)


def auc_mann_whitney(authentic_scores, impostor_scores, lower_is_authentic: bool = True) -> float:
    """AUC as ``U / (n_pos n_neg)`` from midranks, independent of the ROC sweep."""
    pos = np.asarray(authentic_scores, dtype=np.float64).ravel()
    neg = np.asarray(impostor_scores, dtype=np.float64).ravel()
    if pos.size == 0 or neg.size == 0:
        raise ValueError("need at least one authentic and one impostor score")
    if lower_is_authentic:
        pos, neg = -pos, -neg
    ranks = stats.rankdata(np.concatenate([pos, neg]))
    u = ranks[: pos.size].sum() - pos.size * (pos.size + 1) / 2
    return float(u / (pos.size * neg.size))


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Identification counts: rows are true masks, columns chosen candidates."""

    counts: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or np.any(c < 0):
            raise ValueError("confusion counts must be a square non-negative matrix")
        object.__setattr__(self, "counts", c)

    @property
    def accuracy(self) -> float:
        total = self.counts.sum()
        return float(np.trace(self.counts) / total) if total else float("nan")


def confusion(
    measurements: Sequence[Measurement],
    true_keys: Sequence[MaskPattern],
    candidates: Sequence[MaskPattern],
    score_kind: str,
    decoder: Decoder,
    optics,
    lensed: Sequence | None = None,
) -> ConfusionMatrix:
    """Identify every measurement among ``candidates`` and tally the outcomes."""
    if len(measurements) != len(true_keys):
        raise ValueError("one true key per measurement")
    candidates = list(candidates)
    rows = []
    for key in true_keys:
        try:
            rows.append(candidates.index(key))
        except ValueError:
            raise ValueError("a measurement's true key is not among the candidates") from None
    m = len(candidates)
    counts = np.zeros((m, m), dtype=np.int64)
    for i, (meas, t) in enumerate(zip(measurements, rows)):
        ref = None if lensed is None else lensed[i]
        counts[t, identify(meas, candidates, score_kind, decoder, optics, lensed=ref)] += 1
    return ConfusionMatrix(counts)
