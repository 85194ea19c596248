"""Deterministic synthetic scenes for desk-scale experiments."""

from __future__ import annotations

import numpy as np
from scipy import ndimage

__all__ = ["synthetic_scene", "synthetic_scenes"]


def synthetic_scene(size: int, seed: int, channels: int = 1) -> np.ndarray:
    """
    Piecewise-smooth test image in [0, 1], shape ``(channels, size, size)``.

    A low-pass random background overlaid with a few flat rectangles and
    disks, which gives both smooth regions and sharp edges.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size] / size
    planes = []
    base = ndimage.gaussian_filter(rng.standard_normal((size, size)), sigma=size / 10, mode="wrap")
    base = (base - base.min()) / max(np.ptp(base), 1e-12)
    shapes = []
    for _ in range(rng.integers(3, 7)):
        cy, cx = rng.uniform(0.1, 0.9, size=2)
        ext = rng.uniform(0.06, 0.25)
        if rng.random() < 0.5:
            m = (np.abs(yy - cy) < ext) & (np.abs(xx - cx) < ext * rng.uniform(0.5, 1.5))
        else:
            m = (yy - cy) ** 2 + (xx - cx) ** 2 < ext**2
        shapes.append((m, rng.uniform(0, 1, size=channels)))
    for c in range(channels):
        img = 0.3 + 0.4 * np.roll(base, 7 * c, axis=1)
        for m, val in shapes:
            img = np.where(m, val[c], img)
        planes.append(img)
    return np.clip(np.stack(planes), 0.0, 1.0)


def synthetic_scenes(n: int, size: int, seed: int, channels: int = 1) -> list[np.ndarray]:
    seeds = np.random.SeedSequence(seed).generate_state(n)
    return [synthetic_scene(size, int(s), channels) for s in seeds]
