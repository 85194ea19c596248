"""
Programmable mask
=================

Data model for the programmable (LCD) mask whose quantized sub-pixel weights
act as the secret key, plus pattern generation, perturbation and
serialization.

Sub-pixels are stored in row-major order over ``(row, col, subpixel)``. For
RGB masks the sub-pixels of a pixel are vertical stripes ordered R, G, B from
left to right.
"""

from __future__ import annotations

import base64
import hashlib
import hmac
import json
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

__all__ = [
    "MaskSpec",
    "MaskPattern",
    "PROTOTYPE_SPEC",
    "DESK_SPEC",
    "generate_uniform",
    "generate_keyed",
    "perturb",
    "fraction_correct",
    "pack_levels",
    "unpack_levels",
]

_HEADER = struct.Struct("<IIII")


@dataclass(frozen=True)
class MaskSpec:
    """
    Geometry and quantization of a programmable mask.

    Parameters
    ----------
    rows, cols : int
        Number of mask pixel rows / columns.
    subpixels_per_pixel : int
        1 for a monochrome mask, 3 for RGB stripes.
    pitch_x, pitch_y : float
        Sub-pixel pitch [m].
    bit_depth : int
        Bits per sub-pixel weight.
    fill_factor : float
        Transmissive fraction of each sub-pixel's area, in (0, 1].
    """

    rows: int = 18
    cols: int = 26
    subpixels_per_pixel: int = 3
    pitch_x: float = 0.06e-3
    pitch_y: float = 0.18e-3
    bit_depth: int = 8
    fill_factor: float = 1.0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"mask needs at least one pixel, got {self.rows}x{self.cols}")
        if self.subpixels_per_pixel not in (1, 3):
            raise ValueError("subpixels_per_pixel must be 1 (monochrome) or 3 (RGB)")
        if self.bit_depth < 1:
            raise ValueError(f"bit_depth must be >= 1, got {self.bit_depth}")
        if not 0 < self.fill_factor <= 1:
            raise ValueError(f"fill_factor must be in (0, 1], got {self.fill_factor}")
        if self.pitch_x <= 0 or self.pitch_y <= 0:
            raise ValueError("sub-pixel pitch must be positive")

    @property
    def n_subpixels(self) -> int:
        return self.rows * self.cols * self.subpixels_per_pixel

    @property
    def n_levels(self) -> int:
        return 2**self.bit_depth

    @property
    def extent(self) -> tuple[float, float]:
        """Physical (height, width) of the mask [m]."""
        return self.rows * self.pitch_y, self.cols * self.subpixels_per_pixel * self.pitch_x

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MaskSpec":
        return cls(**d)


# 3 x 18 x 26 = 1404 sub-pixels at 8 bits, as on the LCD prototype.
PROTOTYPE_SPEC = MaskSpec()

# Small monochrome mask used for desk-scale experiments.
DESK_SPEC = MaskSpec(
    rows=12, cols=16, subpixels_per_pixel=1, pitch_x=0.18e-3, pitch_y=0.18e-3, bit_depth=8
)


@dataclass(frozen=True, eq=False)
class MaskPattern:
    """Quantized sub-pixel levels of a mask; the secret key."""

    spec: MaskSpec
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=np.int64).ravel()
        if w.size != self.spec.n_subpixels:
            raise ValueError(f"expected {self.spec.n_subpixels} weights, got {w.size}")
        if w.size and (w.min() < 0 or w.max() >= self.spec.n_levels):
            raise ValueError(f"levels must lie in [0, {self.spec.n_levels - 1}]")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __eq__(self, other):
        if not isinstance(other, MaskPattern):
            return NotImplemented
        return self.spec == other.spec and np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash((self.spec, self.weights.tobytes()))

    @property
    def transmission(self) -> np.ndarray:
        """Real-valued transmission in [0, 1], one entry per sub-pixel."""
        return self.weights / (self.spec.n_levels - 1)

    def grid(self) -> np.ndarray:
        """Levels reshaped to ``(rows, cols, subpixels_per_pixel)``."""
        s = self.spec
        return self.weights.reshape(s.rows, s.cols, s.subpixels_per_pixel)

    def fingerprint(self) -> str:
        h = hashlib.sha256(json.dumps(self.spec.to_dict(), sort_keys=True).encode())
        h.update(self.weights.astype("<u4").tobytes())
        return h.hexdigest()

    # -- serialization -----------------------------------------------------

    def to_json(self) -> str:
        packed = pack_levels(self.weights, self.spec.bit_depth)
        return json.dumps(
            {"spec": self.spec.to_dict(), "weights": base64.b64encode(packed).decode("ascii")},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "MaskPattern":
        d = json.loads(text)
        spec = MaskSpec.from_dict(d["spec"])
        raw = base64.b64decode(d["weights"])
        return cls(spec, unpack_levels(raw, spec.bit_depth, spec.n_subpixels))

    def to_bytes(self) -> bytes:
        s = self.spec
        header = _HEADER.pack(s.rows, s.cols, s.subpixels_per_pixel, s.bit_depth)
        return header + pack_levels(self.weights, s.bit_depth)

    @classmethod
    def from_bytes(cls, data: bytes, template: MaskSpec | None = None) -> "MaskPattern":
        """
        Decode the raw binary format.

        The header only carries the grid shape and bit depth; pitch and fill
        factor are taken from ``template`` (or the defaults).
        """
        if len(data) < _HEADER.size:
            raise ValueError("truncated mask header")
        rows, cols, sub, bits = _HEADER.unpack_from(data)
        base = template if template is not None else MaskSpec()
        spec = MaskSpec(
            rows=rows,
            cols=cols,
            subpixels_per_pixel=sub,
            pitch_x=base.pitch_x,
            pitch_y=base.pitch_y,
            bit_depth=bits,
            fill_factor=base.fill_factor,
        )
        levels = unpack_levels(data[_HEADER.size :], bits, spec.n_subpixels)
        return cls(spec, levels)


def pack_levels(levels: np.ndarray, bit_depth: int) -> bytes:
    """Pack levels LSB-first into ``bit_depth`` bits each."""
    levels = np.asarray(levels, dtype=np.uint64)
    shifts = np.arange(bit_depth, dtype=np.uint64)
    bits = ((levels[:, None] >> shifts) & np.uint64(1)).astype(np.uint8)
    return np.packbits(bits.ravel(), bitorder="little").tobytes()


def unpack_levels(data: bytes, bit_depth: int, count: int) -> np.ndarray:
    nbits = bit_depth * count
    buf = np.frombuffer(data, dtype=np.uint8)
    if buf.size * 8 < nbits:
        raise ValueError(f"need {nbits} bits of level data, got {buf.size * 8}")
    bits = np.unpackbits(buf, bitorder="little")[:nbits].reshape(count, bit_depth)
    weights = 1 << np.arange(bit_depth, dtype=np.int64)
    return bits.astype(np.int64) @ weights


def generate_uniform(spec: MaskSpec, seed: int) -> MaskPattern:
    """Draw every level independently and uniformly from ``{0, ..., 2^b - 1}``."""
    rng = np.random.default_rng(seed)
    return MaskPattern(spec, rng.integers(0, spec.n_levels, size=spec.n_subpixels))


def _keyed_stream(key: bytes, nbytes: int) -> bytes:
    # counter-mode HMAC-SHA256 keystream
    out = bytearray()
    counter = 0
    while len(out) < nbytes:
        out += hmac.new(key, counter.to_bytes(8, "little"), hashlib.sha256).digest()
        counter += 1
    return bytes(out[:nbytes])


def generate_keyed(spec: MaskSpec, user: bytes, timestamp: int, secret: bytes) -> MaskPattern:
    """
    Deterministic mask pattern bound to a user and a timestamp.

    A per-pattern key is derived as ``HMAC-SHA256(secret, len(user) || user ||
    timestamp)`` and expanded in counter mode. Each level consumes
    ``ceil(b / 8)`` stream bytes masked to ``b`` bits, which is exactly
    uniform because the level count is a power of two.
    """
    if not secret:
        raise ValueError("secret must be non-empty")
    if isinstance(user, str):
        user = user.encode("utf-8")
    msg = len(user).to_bytes(8, "little") + user + int(timestamp).to_bytes(8, "little", signed=True)
    key = hmac.new(secret, msg, hashlib.sha256).digest()
    per_level = (spec.bit_depth + 7) // 8
    stream = np.frombuffer(_keyed_stream(key, per_level * spec.n_subpixels), dtype=np.uint8)
    chunks = stream.reshape(spec.n_subpixels, per_level).astype(np.int64)
    values = chunks @ (256 ** np.arange(per_level, dtype=np.int64))
    return MaskPattern(spec, values & (spec.n_levels - 1))


def perturb(pattern: MaskPattern, fraction_wrong: float, seed: int) -> MaskPattern:
    """
    Replace ``round(fraction_wrong * N)`` randomly chosen sub-pixels.

    Each selected sub-pixel gets a level drawn uniformly from the levels other
    than its current one, so the agreement with the input is exactly
    ``1 - round(fraction_wrong * N) / N``.
    """
    if not 0.0 <= fraction_wrong <= 1.0:
        raise ValueError(f"fraction_wrong must be in [0, 1], got {fraction_wrong}")
    n = pattern.spec.n_subpixels
    n_levels = pattern.spec.n_levels
    k = int(round(fraction_wrong * n))
    if k == 0:
        return pattern
    rng = np.random.default_rng(seed)
    idx = rng.choice(n, size=k, replace=False)
    w = pattern.weights.copy()
    w[idx] = (w[idx] + rng.integers(1, n_levels, size=k)) % n_levels
    return MaskPattern(pattern.spec, w)


def fraction_correct(a: MaskPattern, b: MaskPattern) -> float:
    if a.spec != b.spec:
        raise ValueError("patterns have different mask specs")
    return float(np.mean(a.weights == b.weights))
