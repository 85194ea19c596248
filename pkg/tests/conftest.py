import numpy as np
import pytest

from lenscrypt.mask import DESK_SPEC, generate_uniform
from lenscrypt.optics import DESK_OPTICS, simulate_psf
from lenscrypt.scenes import synthetic_scene


@pytest.fixture(scope="session")
def desk_key():
    return generate_uniform(DESK_SPEC, 7)


@pytest.fixture(scope="session")
def desk_psf(desk_key):
    return simulate_psf(DESK_SPEC, desk_key, DESK_OPTICS)


@pytest.fixture(scope="session")
def desk_scene():
    return synthetic_scene(64, 0)


def centered_scene(size=64, inner=16, seed=0):
    """Random content in a central ``inner x inner`` block, zero elsewhere."""
    x = np.zeros((1, size, size))
    a = (size - inner) // 2
    x[0, a : a + inner, a : a + inner] = np.random.default_rng(seed).random((inner, inner))
    return x


def invertible_psf(size, floor=0.01, seed=0):
    """
    Random compact PSF whose padded-grid transfer function satisfies ``|K| > floor``.

    Draws a 5x5 positive kernel with a strong center and rejects it until the
    floor is verified on the padded grid the decoders use.
    """
    from lenscrypt.forward import padded_otf

    rng = np.random.default_rng(seed)
    c = size // 2
    while True:
        taps = rng.random((5, 5)) * 0.3
        taps[2, 2] = 1.0
        p = np.zeros((size, size))
        p[c - 2 : c + 3, c - 2 : c + 3] = taps
        p /= p.sum()
        if np.abs(padded_otf(p)).min() > floor:
            return p


NATURAL_IMAGES = (
    "astronaut", "brick", "camera", "cat", "chelsea", "clock", "coffee", "coins", "grass", "gravel",
    "horse", "hubble_deep_field", "immunohistochemistry", "moon", "page", "retina", "rocket", "text",
)


def natural_image(name, size=64):
    """A photograph bundled with scikit-image, gray, center-cropped and resized to ``size``."""
    from skimage import color, data, transform

    im = np.asarray(getattr(data, name)(), dtype=np.float64)
    if im.max() > 1:
        im /= 255.0
    if im.ndim == 3:
        im = color.rgb2gray(im[..., :3])
    side = min(im.shape)
    a, b = (im.shape[0] - side) // 2, (im.shape[1] - side) // 2
    return transform.resize(im[a : a + side, b : b + side], (size, size), anti_aliasing=True)


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
