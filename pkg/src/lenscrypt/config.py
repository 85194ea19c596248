"""Experiment configuration: a single JSON document validated against ``config_schema.json``."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

from .forward import NoiseModel
from .mask import DESK_SPEC, PROTOTYPE_SPEC, MaskSpec
from .optics import DESK_OPTICS, PROTOTYPE_OPTICS, OpticsConfig
from .recon import AdmmParams, Decoder

__all__ = ["ConfigError", "ExperimentConfig", "EXPERIMENTS", "load_schema", "load_config"]

EXPERIMENTS = ("psf", "encrypt", "decrypt", "sweep", "auth-eval", "roc", "mismatch-demo", "keybound")


class ConfigError(ValueError):
    pass


def load_schema() -> dict:
    return json.loads(resources.files(__package__).joinpath("config_schema.json").read_text())


def _section(raw: dict, name: str, defaults: dict) -> dict:
    return {**defaults, **raw.get(name, {})}


@dataclass
class ExperimentConfig:
    experiment: str | None
    seed: int
    out_dir: Path
    threads: int
    mask: MaskSpec
    optics: OpticsConfig
    noise: NoiseModel
    decoder: Decoder
    key: dict
    scenes: dict
    inputs: dict
    sweep: dict
    auth: dict
    mismatch: dict
    keybound: dict
    raw: dict = field(repr=False)
    base_dir: Path = Path(".")

    def resolve(self, path: str | None) -> Path | None:
        if path is None:
            return None
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.raw, sort_keys=True).encode()).hexdigest()

    @classmethod
    def from_dict(cls, raw: dict, base_dir: Path = Path(".")) -> "ExperimentConfig":
        try:
            jsonschema.validate(raw, load_schema())
        except jsonschema.ValidationError as exc:
            loc = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigError(f"invalid config at {loc}: {exc.message}") from None

        preset = raw.get("preset", "desk")
        mask0 = DESK_SPEC if preset == "desk" else PROTOTYPE_SPEC
        optics0 = DESK_OPTICS if preset == "desk" else PROTOTYPE_OPTICS
        try:
            mask = MaskSpec(**_section(raw, "mask", mask0.to_dict()))
            optics = OpticsConfig(**_section(raw, "optics", optics0.to_dict()))
            noise_d = _section(raw, "noise", {"snr_db": 40.0, "quantization_bits": None})
            noise = NoiseModel(noise_d["snr_db"], noise_d["quantization_bits"], seed=raw.get("seed", 0))
            dec_d = raw.get("decoder", {})
            decoder = Decoder(
                kind=dec_d.get("kind", "admm"),
                noise_floor=dec_d.get("noise_floor", 1e-4),
                lam=dec_d.get("lam", 1e-4),
                admm=AdmmParams(**dec_d.get("admm", {})),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        if mask.subpixels_per_pixel == 3 and optics.n_channels != 3:
            raise ConfigError("an RGB mask needs three wavelengths")

        cfg = cls(
            experiment=raw.get("experiment"),
            seed=raw.get("seed", 0),
            out_dir=Path(raw.get("out_dir", "out")),
            threads=raw.get("threads", 1),
            mask=mask,
            optics=optics,
            noise=noise,
            decoder=decoder,
            key=_section(raw, "key", {"mode": "uniform", "seed": 0}),
            scenes=_section(raw, "scenes", {"input_dir": None, "count": 10}),
            inputs=raw.get("inputs", {}),
            sweep=_section(
                raw, "sweep", {"fractions": [round(0.1 * i, 1) for i in range(11)], "trials_per_point": 5}
            ),
            auth=_section(
                raw,
                "auth",
                {
                    "n_candidates": 16,
                    "trials": 50,
                    "score_kinds": ["data_fidelity", "mse_ref", "ssim_ref"],
                    "user": "user",
                    "secret": "lenscrypt-demo-secret",
                    "timestamp0": 1_700_000_000,
                },
            ),
            mismatch=_section(raw, "mismatch", {"systems": 100, "n": 8, "radius": 0.5, "k_max": 50}),
            keybound=_section(raw, "keybound", {"key_bits": [128, 256], "base": 8, "n": 1404, "ratio": 0.6}),
            raw=raw,
            base_dir=base_dir,
        )
        cfg._check_paths()
        return cfg

    def _check_paths(self):
        refs = [self.scenes.get("input_dir"), *self.inputs.values()]
        if self.key.get("mode") == "file":
            if "path" not in self.key:
                raise ConfigError("key mode 'file' needs key.path")
            refs.append(self.key["path"])
        for ref in refs:
            if ref is not None and not self.resolve(ref).exists():
                raise ConfigError(f"path does not exist: {ref}")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return ExperimentConfig.from_dict(raw, base_dir=path.parent)
