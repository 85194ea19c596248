"""
File formats: raster images, float32 raw planes with a JSON sidecar, CSV tables.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

__all__ = [
    "IMAGE_SUFFIXES",
    "read_image",
    "load_images",
    "ingest_images",
    "write_image",
    "write_raw",
    "read_raw",
    "write_csv",
    "read_csv",
]

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".png", ".pgm", ".ppm", ".pnm")


def _to_float(img: Image.Image) -> np.ndarray:
    if img.mode in ("I;16", "I;16B", "I;16L", "I"):
        arr = np.asarray(img, dtype=np.float64) / 65535.0
        return arr[None]
    if img.mode == "F":
        return np.asarray(img, dtype=np.float64)[None]
    if img.mode not in ("L", "RGB"):
        img = img.convert("RGB")
    arr = np.asarray(img, dtype=np.float64) / 255.0
    return arr[None] if arr.ndim == 2 else np.moveaxis(arr, -1, 0)


def _square_resize(x: np.ndarray, size: int) -> np.ndarray:
    _, h, w = x.shape
    side = min(h, w)
    top, left = (h - side) // 2, (w - side) // 2
    x = x[:, top : top + side, left : left + side]
    if side == size:
        return x
    resample = Image.Resampling.BOX if side > size else Image.Resampling.BICUBIC
    planes = [
        np.asarray(Image.fromarray(p.astype(np.float32), mode="F").resize((size, size), resample))
        for p in x
    ]
    return np.stack(planes).astype(np.float64)


def _match_channels(x: np.ndarray, channels: int | None) -> np.ndarray:
    if channels is None or x.shape[0] == channels:
        return x
    if channels == 1:
        # ITU-R 601 luma
        return np.tensordot([0.299, 0.587, 0.114], x, axes=1)[None]
    if x.shape[0] == 1:
        return np.repeat(x, channels, axis=0)
    raise ValueError(f"cannot convert {x.shape[0]} channels to {channels}")


def read_image(path, size: int | None = None, channels: int | None = None) -> np.ndarray:
    """
    Read an 8- or 16-bit PNG/PGM/PPM as ``(C, H, W)`` floats in [0, 1].

    8-bit data is divided by 255 and 16-bit data by 65535. With ``size`` the
    image is center-cropped to a square and resized to ``size x size``.
    """
    with Image.open(path) as img:
        img.load()
        x = _to_float(img)
    x = _match_channels(x, channels)
    if size is not None:
        x = _square_resize(x, size)
    return np.clip(x, 0.0, 1.0)


def load_images(directory, size: int | None = None, channels: int | None = None):
    """
    Read every image in ``directory`` in sorted name order.

    Returns ``(images, names, skipped)``; unreadable files are logged and
    listed in ``skipped`` rather than raising.
    """
    directory = Path(directory)
    paths = sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
    images, names, skipped = [], [], []
    for p in paths:
        try:
            images.append(read_image(p, size, channels))
            names.append(p.name)
        except (OSError, UnidentifiedImageError, ValueError) as exc:
            logger.warning("skipping unreadable image %s: %s", p.name, exc)
            skipped.append(p.name)
    if not images:
        logger.warning("no readable images in %s", directory)
    return images, names, skipped


def ingest_images(directory, size: int | None = None, channels: int | None = None) -> list[np.ndarray]:
    return load_images(directory, size, channels)[0]


def write_image(path, x: np.ndarray, normalize: bool = False):
    """
    Write ``(C, H, W)`` or ``(H, W)`` data as an 8-bit PNG/PGM/PPM.

    Values are clipped to [0, 1] unless ``normalize`` scales by the maximum.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 3:
        x = x[0] if x.shape[0] == 1 else np.moveaxis(x, 0, -1)
    if normalize and x.max() > 0:
        x = x / x.max()
    arr = np.round(np.clip(x, 0.0, 1.0) * 255).astype(np.uint8)
    Image.fromarray(arr).save(path)


def write_raw(path, x: np.ndarray, **meta):
    """Lossless little-endian float32 dump plus ``<path>.json`` with shape and metadata."""
    path = Path(path)
    x = np.ascontiguousarray(x, dtype="<f4")
    path.write_bytes(x.tobytes())
    header = {"shape": list(x.shape), "dtype": "<f4", **meta}
    path.with_suffix(path.suffix + ".json").write_text(json.dumps(header, sort_keys=True, indent=1))


def read_raw(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    header = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    data = np.frombuffer(path.read_bytes(), dtype=header.get("dtype", "<f4"))
    return data.reshape(header["shape"]).astype(np.float64), header


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if math.isnan(v) else repr(v)
    return v


def write_csv(path, rows: Iterable[dict], columns: Sequence[str]):
    """CSV with a header line and exactly ``columns``, in that order."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_fmt(row[c]) for c in columns])


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
