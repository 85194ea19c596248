"""
Grid search for the fixed ADMM hyperparameters.

Decodes desk-scale ciphertexts (64x64 synthetic scenes, 12x16 monochrome
mask, 40 dB SNR, 100 iterations) with the true PSF for every (rho, tv_weight)
pair and reports mean PSNR / SSIM. The best pair by mean PSNR is what
``AdmmParams`` uses as its defaults.

    python scripts/grid_search_admm.py --scenes 8 --keys 2
"""

import argparse
import itertools

import numpy as np

from lenscrypt.forward import NoiseModel, encrypt
from lenscrypt.mask import DESK_SPEC, generate_uniform
from lenscrypt.metrics import psnr, ssim
from lenscrypt.optics import DESK_OPTICS, simulate_psf
from lenscrypt.recon import AdmmParams, admm_decode
from lenscrypt.scenes import synthetic_scenes

RHOS = (1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 1.0)
TV_WEIGHTS = (1e-5, 3e-5, 1e-4, 3e-4, 1e-3, 3e-3)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[1])
    parser.add_argument("--scenes", type=int, default=8)
    parser.add_argument("--keys", type=int, default=2)
    parser.add_argument("--snr", type=float, default=40.0)
    parser.add_argument("--seed", type=int, default=2024)
    args = parser.parse_args()

    scenes = synthetic_scenes(args.scenes, DESK_OPTICS.sensor_size, args.seed)
    cases = []
    for k in range(args.keys):
        psf = simulate_psf(DESK_SPEC, generate_uniform(DESK_SPEC, args.seed + k), DESK_OPTICS)
        for i, x in enumerate(scenes):
            cases.append((x, psf, encrypt(x, psf, NoiseModel(args.snr, seed=1000 * k + i))))

    print(f"{'rho':>8} {'tv_weight':>10} {'psnr':>8} {'ssim':>7}")
    results = []
    for rho, tv in itertools.product(RHOS, TV_WEIGHTS):
        params = AdmmParams(rho=rho, tv_weight=tv)
        scores = []
        for x, psf, meas in cases:
            est = admm_decode(meas, psf, params).image
            scores.append((psnr(est, x), ssim(est, x)))
        p, s = np.mean(scores, axis=0)
        results.append((p, s, rho, tv))
        print(f"{rho:8.0e} {tv:10.0e} {p:8.2f} {s:7.3f}")
    p, s, rho, tv = max(results)
    print(f"best: rho={rho:g} tv_weight={tv:g} (PSNR {p:.2f} dB, SSIM {s:.3f})")


if __name__ == "__main__":
    main()
