"""
lenscrypt: optical encryption with a programmable amplitude mask.

A keyed mask pattern turns a lensless camera into an encryption device: the
measurement is the scene convolved with the mask's point spread function, and
only the pattern holder can decode it. The subpackages cover mask keying
(:mod:`~lenscrypt.mask`), PSF simulation (:mod:`~lenscrypt.optics`), the
imaging model (:mod:`~lenscrypt.forward`), decoders (:mod:`~lenscrypt.recon`),
security analysis (:mod:`~lenscrypt.analysis`), authentication
(:mod:`~lenscrypt.auth`) and the experiment runner (:mod:`~lenscrypt.cli`).
"""

__version__ = "0.1.0"

from .analysis import (
    STANDARD_FRACTIONS,
    KeyspaceBound,
    MismatchResult,
    SpectralRadiusError,
    SweepRecord,
    bruteforce_sweep,
    effective_key_length,
    keyspace_bound,
    mismatch_series,
    relative_psf_error,
    summarize_sweep,
)
from .auth import AuthScore, ConfusionMatrix, RocCurve, auc_mann_whitney, confusion, identify, roc, score
from .forward import Measurement, NoiseModel, convolve, encrypt
from .mask import (
    DESK_SPEC,
    PROTOTYPE_SPEC,
    MaskPattern,
    MaskSpec,
    fraction_correct,
    generate_keyed,
    generate_uniform,
    perturb,
)
from .metrics import psnr, ssim
from .optics import DESK_OPTICS, PROTOTYPE_OPTICS, OpticsConfig, Psf, SamplingError, delta_psf, simulate_psf
from .recon import AdmmParams, DecodeResult, Decoder, DivergenceError, IllPosedError, decode
