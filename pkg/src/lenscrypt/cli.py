"""
Command-line experiment runner.

    lenscrypt <experiment> [--config CONFIG] [--seed N] [--out-dir DIR] [--threads N] [--verbose]

Every run writes its artifacts and a ``manifest.json`` into the output
directory. Exit codes: 0 success, 2 configuration error, 3 numerical
failure, 4 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .analysis import (
    SpectralRadiusError,
    bruteforce_sweep,
    effective_key_length,
    keyspace_bound,
    mismatch_series,
    random_mismatch_system,
    summarize_sweep,
)
from .auth import LOWER_IS_AUTHENTIC, AuthScore, PsfCache, auc_mann_whitney, best_index, roc, score_all
from .config import EXPERIMENTS, ConfigError, ExperimentConfig, load_config
from .forward import Measurement, NoiseModel, encrypt
from .io import load_images, read_csv, read_image, read_raw, write_csv, write_image, write_raw
from .mask import MaskPattern, generate_keyed, generate_uniform
from .metrics import psnr, ssim
from .optics import SamplingError, simulate_psf
from .recon import DivergenceError, IllPosedError
from .scenes import synthetic_scenes

__all__ = ["main", "run", "EXIT_OK", "EXIT_CONFIG", "EXIT_NUMERICAL", "EXIT_IO"]

logger = logging.getLogger("lenscrypt")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

SWEEP_COLUMNS = (
    "fraction_correct", "psnr_db", "ssim", "relative_psf_error", "seed", "decoder", "scene_index", "error",
)
SUMMARY_COLUMNS = (
    "fraction_correct", "n", "psnr_db_mean", "psnr_db_std", "ssim_mean", "ssim_std",
    "relative_psf_error_mean", "relative_psf_error_std",
)
SCORE_COLUMNS = ("trial", "true_index", "candidate", "score_kind", "value", "authentic")


class Run:
    """State shared by the experiment handlers of one invocation."""

    def __init__(self, cfg: ExperimentConfig, out_dir: Path, threads: int):
        self.cfg = cfg
        self.out = out_dir
        self.threads = threads
        self.artifacts: list[str] = []
        self.skipped: list[str] = []
        self.summary: dict = {}

    def path(self, name: str) -> Path:
        p = self.out / name
        p.parent.mkdir(parents=True, exist_ok=True)
        self.artifacts.append(name)
        return p

    def map(self, fn, items):
        items = list(items)
        if self.threads > 1:
            with ThreadPoolExecutor(self.threads) as pool:
                return list(pool.map(fn, items))
        return [fn(i) for i in items]

    def key(self) -> MaskPattern:
        k = self.cfg.key
        spec = self.cfg.mask
        if k["mode"] == "keyed":
            return generate_keyed(
                spec, k.get("user", "user").encode(), k.get("timestamp", 0),
                k.get("secret", "lenscrypt-demo-secret").encode(),
            )
        if k["mode"] == "file":
            p = self.cfg.resolve(k["path"])
            if p.suffix == ".json":
                pattern = MaskPattern.from_json(p.read_text())
            else:
                pattern = MaskPattern.from_bytes(p.read_bytes(), template=spec)
            if pattern.spec != spec:
                raise ConfigError("key file does not match the configured mask")
            return pattern
        return generate_uniform(spec, k.get("seed", self.cfg.seed))

    def scenes(self) -> tuple[list[np.ndarray], list[str]]:
        size = self.cfg.optics.sensor_size
        channels = self.cfg.optics.n_channels
        src = self.cfg.scenes.get("input_dir")
        if src:
            images, names, skipped = load_images(self.cfg.resolve(src), size, channels)
            self.skipped.extend(skipped)
            return images, names
        n = self.cfg.scenes["count"]
        return synthetic_scenes(n, size, self.cfg.seed, channels), [f"synthetic_{i:03d}" for i in range(n)]

    def noise(self, seed: int) -> NoiseModel:
        n = self.cfg.noise
        return NoiseModel(n.snr_db, n.quantization_bits, seed=seed)


def _seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


# -- experiments -----------------------------------------------------------------


def exp_psf(r: Run):
    key = r.key()
    psf = simulate_psf(key.spec, key, r.cfg.optics)
    r.path("pattern.json").write_text(key.to_json())
    r.path("pattern.bin").write_bytes(key.to_bytes())
    write_image(r.path("psf.png"), psf.planes, normalize=True)
    write_raw(r.path("psf.f32"), psf.planes, normalization=psf.normalization)
    r.summary["psf_fingerprint"] = psf.fingerprint()


def exp_encrypt(r: Run):
    key = r.key()
    psf = simulate_psf(key.spec, key, r.cfg.optics)
    r.path("pattern.json").write_text(key.to_json())
    scenes, names = r.scenes()
    rows = []
    for i, (x, name) in enumerate(zip(scenes, names)):
        meas = encrypt(x, psf, r.noise(_seed(r.cfg.seed, i)))
        stem = f"{i:03d}"
        write_image(r.path(f"plaintext/{stem}.png"), x)
        write_image(r.path(f"ciphertext/{stem}.png"), meas.data, normalize=True)
        write_raw(r.path(f"ciphertext/{stem}.f32"), meas.data, snr_db=meas.snr_db, seed=meas.seed,
                  psf_fingerprint=meas.psf_fingerprint)
        rows.append({"index": i, "name": name, "snr_db": meas.snr_db, "seed": meas.seed,
                     "psf_fingerprint": meas.psf_fingerprint})
    write_csv(r.path("encrypt.csv"), rows, ("index", "name", "snr_db", "seed", "psf_fingerprint"))


def exp_decrypt(r: Run):
    src = r.cfg.inputs.get("measurement_dir")
    if not src:
        raise ConfigError("decrypt needs inputs.measurement_dir")
    key = r.key()
    psf = simulate_psf(key.spec, key, r.cfg.optics)
    files = sorted(r.cfg.resolve(src).glob("*.f32"))
    plain_dir = r.cfg.inputs.get("plaintext_dir")
    plain_dir = r.cfg.resolve(plain_dir) if plain_dir else None

    def one(path):
        data, header = read_raw(path)
        meas = Measurement(np.maximum(data, 0.0), snr_db=header.get("snr_db"), seed=header.get("seed"))
        return path, r.cfg.decoder(meas, psf)

    rows = []
    for path, res in r.map(one, files):
        stem = path.stem
        write_image(r.path(f"recon/{stem}.png"), res.image)
        write_raw(r.path(f"recon/{stem}.f32"), res.image)
        row = {"name": stem, "data_fidelity": res.data_fidelity, "iterations": res.iterations_run,
               "psnr_db": float("nan"), "ssim": float("nan")}
        if plain_dir is not None and (plain_dir / f"{stem}.png").exists():
            x = read_image(plain_dir / f"{stem}.png", r.cfg.optics.sensor_size, r.cfg.optics.n_channels)
            row["psnr_db"] = psnr(res.image, x)
            row["ssim"] = ssim(res.image, x)
        rows.append(row)
    write_csv(r.path("decrypt.csv"), rows, ("name", "data_fidelity", "iterations", "psnr_db", "ssim"))


def exp_sweep(r: Run):
    key = r.key()
    scenes, _ = r.scenes()
    if not scenes:
        raise ConfigError("sweep needs at least one scene")
    records = bruteforce_sweep(
        scenes, key, r.cfg.sweep["fractions"], r.cfg.sweep["trials_per_point"], r.cfg.decoder,
        r.cfg.optics, noise=r.noise(r.cfg.seed), seed=r.cfg.seed, threads=r.threads,
    )
    write_csv(r.path("sweep.csv"), [rec.to_dict() for rec in records], SWEEP_COLUMNS)
    write_csv(r.path("sweep_summary.csv"), summarize_sweep(records), SUMMARY_COLUMNS)
    r.summary["rows"] = len(records)
    r.summary["failed"] = sum(1 for rec in records if rec.error)


def _auth_scores(r: Run) -> list[dict]:
    a = r.cfg.auth
    spec = r.cfg.mask
    candidates = [
        generate_keyed(spec, a["user"].encode(), a["timestamp0"] + i, a["secret"].encode())
        for i in range(a["n_candidates"])
    ]
    cache = PsfCache(r.cfg.optics)
    for c in candidates:
        cache(c)
    scenes, _ = r.scenes()
    if not scenes:
        raise ConfigError("auth-eval needs at least one scene")
    kinds = a["score_kinds"]

    def trial(t):
        k = t % len(candidates)
        x = scenes[t % len(scenes)]
        meas = encrypt(x, cache(candidates[k]), r.noise(_seed(r.cfg.seed, t)))
        rows = []
        for j, cand in enumerate(candidates):
            for kind, s in score_all(meas, cand, kinds, r.cfg.decoder, cache, lensed=x, candidate_id=j).items():
                rows.append({"trial": t, "true_index": k, "candidate": j, "score_kind": kind,
                             "value": s.value, "authentic": j == k})
        return rows

    return [row for rows in r.map(trial, range(a["trials"])) for row in rows]


def _auth_tables(r: Run, rows: list[dict]):
    m = r.cfg.auth["n_candidates"]
    summary = []
    for kind in r.cfg.auth["score_kinds"]:
        sel = [row for row in rows if row["score_kind"] == kind]
        counts = np.zeros((m, m), dtype=int)
        by_trial: dict[int, list] = {}
        for row in sel:
            by_trial.setdefault(row["trial"], []).append(row)
        for trial_rows in by_trial.values():
            trial_rows.sort(key=lambda q: q["candidate"])
            best = best_index(
                [AuthScore(q["candidate"], kind, q["value"], LOWER_IS_AUTHENTIC[kind]) for q in trial_rows]
            )
            counts[trial_rows[0]["true_index"], best] += 1
        write_csv(
            r.path(f"confusion_{kind}.csv"),
            [{"true": i, **{f"c{j}": int(counts[i, j]) for j in range(m)}} for i in range(m)],
            ("true", *[f"c{j}" for j in range(m)]),
        )
        auth = [row["value"] for row in sel if row["authentic"]]
        imp = [row["value"] for row in sel if not row["authentic"]]
        curve = roc(auth, imp, LOWER_IS_AUTHENTIC[kind])
        summary.append({"score_kind": kind, "accuracy": float(np.trace(counts) / counts.sum()),
                        "auc": curve.auc, "trials": len(by_trial)})
    write_csv(r.path("auth_summary.csv"), summary, ("score_kind", "accuracy", "auc", "trials"))
    r.summary["auth"] = {s["score_kind"]: {"accuracy": s["accuracy"], "auc": s["auc"]} for s in summary}


def exp_auth_eval(r: Run):
    rows = _auth_scores(r)
    write_csv(r.path("scores.csv"), rows, SCORE_COLUMNS)
    _auth_tables(r, rows)


def exp_roc(r: Run):
    src = r.cfg.inputs.get("scores")
    if src:
        rows = [
            {"trial": int(q["trial"]), "true_index": int(q["true_index"]), "candidate": int(q["candidate"]),
             "score_kind": q["score_kind"], "value": float(q["value"]), "authentic": q["authentic"] == "true"}
            for q in read_csv(r.cfg.resolve(src))
        ]
    else:
        rows = _auth_scores(r)
        write_csv(r.path("scores.csv"), rows, SCORE_COLUMNS)
    summary = []
    for kind in sorted({q["score_kind"] for q in rows}):
        auth = [q["value"] for q in rows if q["score_kind"] == kind and q["authentic"]]
        imp = [q["value"] for q in rows if q["score_kind"] == kind and not q["authentic"]]
        lower = LOWER_IS_AUTHENTIC[kind]
        curve = roc(auth, imp, lower)
        write_csv(
            r.path(f"roc_{kind}.csv"),
            [{"threshold": t, "fpr": f, "tpr": p} for t, f, p in zip(curve.thresholds, curve.fpr, curve.tpr)],
            ("threshold", "fpr", "tpr"),
        )
        summary.append({"score_kind": kind, "auc": curve.auc, "auc_mann_whitney": auc_mann_whitney(auth, imp, lower),
                        "authentic": len(auth), "impostor": len(imp)})
    write_csv(r.path("roc_summary.csv"), summary, ("score_kind", "auc", "auc_mann_whitney", "authentic", "impostor"))
    r.summary["auc"] = {s["score_kind"]: s["auc"] for s in summary}


def exp_mismatch_demo(r: Run):
    m = r.cfg.mismatch
    rng = np.random.default_rng(r.cfg.seed)
    rows = []
    for i in range(m["systems"]):
        H, D, x, n = random_mismatch_system(rng, m["n"], m["radius"])
        res = mismatch_series(H, D, x, n, m["k_max"])
        rows.append({"system": i, "spectral_radius": res.spectral_radius, "relative_error": res.relative_gap,
                     "error_term_norm": float(np.linalg.norm(res.error_term))})
    write_csv(r.path("mismatch.csv"), rows, ("system", "spectral_radius", "relative_error", "error_term_norm"))
    worst = max(q["relative_error"] for q in rows)
    r.summary["max_relative_error"] = worst
    print(f"direct vs series: max relative error {worst:.3e} over {len(rows)} systems (k_max={m['k_max']})")


def exp_keybound(r: Run):
    kb = r.cfg.keybound
    rows = []
    for k in kb["key_bits"]:
        b = keyspace_bound(k, kb["base"], kb["n"])
        rows.append({"key_bits": k, "base": kb["base"], "n": kb["n"], "ratio": b.ratio,
                     "over_capacity": b.over_capacity})
        print(f"K={k:g} bits: at least {100 * b.ratio:.2f}% of {kb['n']} sub-pixels must be correct")
    write_csv(r.path("keybound.csv"), rows, ("key_bits", "base", "n", "ratio", "over_capacity"))
    eff = effective_key_length(kb["ratio"], kb["base"], kb["n"])
    print(f"effective key length at W={kb['ratio']:g}: {eff} bits")
    r.summary["effective_key_length"] = eff


HANDLERS = {
    "psf": exp_psf,
    "encrypt": exp_encrypt,
    "decrypt": exp_decrypt,
    "sweep": exp_sweep,
    "auth-eval": exp_auth_eval,
    "roc": exp_roc,
    "mismatch-demo": exp_mismatch_demo,
    "keybound": exp_keybound,
}


def _write_manifest(r: Run):
    manifest = {
        "experiment": r.cfg.experiment,
        "config_sha256": r.cfg.digest(),
        "seed": r.cfg.seed,
        "threads": r.threads,
        "versions": {
            "lenscrypt": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "artifacts": sorted(r.artifacts),
        "skipped_inputs": r.skipped,
        "summary": r.summary,
    }
    (r.out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True, default=float))


def run(
    config,
    experiment: str | None = None,
    seed: int | None = None,
    out_dir=None,
    threads: int | None = None,
) -> int:
    """
    Run one experiment and return the exit status.

    ``config`` is a path to a JSON config or an already parsed
    :class:`ExperimentConfig` (``None`` uses every default).
    """
    try:
        if config is None:
            cfg = ExperimentConfig.from_dict({})
        elif isinstance(config, ExperimentConfig):
            cfg = config
        else:
            cfg = load_config(config)
        kind = experiment or cfg.experiment
        if kind is None:
            raise ConfigError("no experiment given on the command line or in the config")
        if cfg.experiment is not None and experiment is not None and cfg.experiment != experiment:
            raise ConfigError(f"config is for {cfg.experiment!r}, not {experiment!r}")
        cfg.experiment = kind
        if seed is not None:
            cfg.seed = seed
            cfg.raw = {**cfg.raw, "seed": seed}
            cfg.noise = NoiseModel(cfg.noise.snr_db, cfg.noise.quantization_bits, seed=seed)
        env = os.environ.get("LENSCRYPT_THREADS")
        n_threads = int(env) if env else (threads or cfg.threads)
        if n_threads < 1:
            raise ConfigError("thread count must be >= 1")
        out = Path(out_dir) if out_dir is not None else cfg.resolve(str(cfg.out_dir))
        out.mkdir(parents=True, exist_ok=True)
        r = Run(cfg, out, n_threads)
        HANDLERS[kind](r)
        _write_manifest(r)
    except ConfigError as exc:
        logger.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (IllPosedError, DivergenceError, SpectralRadiusError, SamplingError,
            FloatingPointError, np.linalg.LinAlgError) as exc:
        logger.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except OSError as exc:
        logger.error("I/O failure: %s", exc)
        return EXIT_IO
    except ValueError as exc:
        # remaining validation errors stem from inconsistent inputs
        logger.error("configuration error: %s", exc)
        return EXIT_CONFIG
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON experiment config")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out-dir", help="output directory (overrides the config)")
    common.add_argument("--threads", type=int, help="worker threads; LENSCRYPT_THREADS overrides")
    common.add_argument("--verbose", "-v", action="store_true")
    parser = argparse.ArgumentParser(
        prog="lenscrypt", description="Lensless optical encryption experiments.", parents=[common]
    )
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sub.add_parser(name, parents=[common])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    return run(args.config, args.experiment, args.seed, args.out_dir, args.threads)


if __name__ == "__main__":
    sys.exit(main())
