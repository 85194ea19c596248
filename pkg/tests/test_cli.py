import json

import numpy as np
import pytest
from PIL import Image

from lenscrypt.cli import EXIT_CONFIG, EXIT_IO, EXIT_NUMERICAL, EXIT_OK, main, run
from lenscrypt.config import ConfigError, ExperimentConfig, load_config
from lenscrypt.io import read_csv
from lenscrypt.mask import DESK_SPEC, MaskPattern, generate_uniform


def write_config(path, **cfg):
    path.write_text(json.dumps(cfg))
    return path


def csv_bytes(out):
    return {p.name: p.read_bytes() for p in sorted(out.glob("*.csv"))}


# -- config ---------------------------------------------------------------------


def test_defaults_are_desk_scale():
    cfg = ExperimentConfig.from_dict({})
    assert cfg.mask == DESK_SPEC and cfg.optics.sensor_size == 64
    assert cfg.noise.snr_db == 40.0 and cfg.decoder.kind == "admm"


@pytest.mark.parametrize(
    "raw",
    [
        {"unknown": 1},
        {"experiment": "train"},
        {"decoder": {"kind": "admm", "admm": {"rho": -1}}},
        {"mask": {"bit_depth": 0}},
        {"scenes": {"input_dir": "does/not/exist"}},
        {"key": {"mode": "file"}},
        {"preset": "prototype", "optics": {"wavelengths": [5.5e-7]}},
    ],
)
def test_invalid_configs(raw):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(raw)


def test_paths_resolve_against_config_dir(tmp_path):
    (tmp_path / "imgs").mkdir()
    cfg = load_config(write_config(tmp_path / "c.json", scenes={"input_dir": "imgs"}))
    assert cfg.resolve("imgs") == tmp_path / "imgs"


def test_bad_json(tmp_path):
    (tmp_path / "c.json").write_text("{nope")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "c.json")


# -- runs -----------------------------------------------------------------------


def test_sweep_has_55_rows(tmp_path):
    cfg = write_config(
        tmp_path / "c.json",
        experiment="sweep",
        decoder={"kind": "wiener", "noise_floor": 1e-3},
        scenes={"count": 3},
        sweep={"fractions": [i / 10 for i in range(11)], "trials_per_point": 5},
    )
    assert run(cfg, out_dir=tmp_path / "out") == EXIT_OK
    rows = read_csv(tmp_path / "out" / "sweep.csv")
    assert len(rows) == 55
    assert list(rows[0]) == [
        "fraction_correct", "psnr_db", "ssim", "relative_psf_error", "seed", "decoder", "scene_index", "error",
    ]
    assert len(read_csv(tmp_path / "out" / "sweep_summary.csv")) == 11


def test_mismatch_demo_prints_small_error(tmp_path, capsys):
    assert main(["mismatch-demo", "--out-dir", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    err = float(out.split("max relative error ")[1].split()[0])
    assert err < 1e-6
    assert len(read_csv(tmp_path / "mismatch.csv")) == 100


def test_keybound_output(tmp_path, capsys):
    assert main(["keybound", "--out-dir", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "3.04%" in out and "6.08%" in out and "2527 bits" in out


@pytest.mark.parametrize(
    "experiment, cfg",
    [
        ("sweep", {"decoder": {"kind": "wiener"}, "scenes": {"count": 2}, "sweep": {"fractions": [0, 0.5, 1], "trials_per_point": 2}}),
        ("auth-eval", {"decoder": {"kind": "wiener"}, "scenes": {"count": 2}, "auth": {"n_candidates": 3, "trials": 4}}),
        ("mismatch-demo", {}),
        ("keybound", {}),
    ],
)
def test_rerun_is_byte_identical(tmp_path, experiment, cfg):
    path = write_config(tmp_path / "c.json", experiment=experiment, seed=5, **cfg)
    assert run(path, out_dir=tmp_path / "a") == EXIT_OK
    assert run(path, out_dir=tmp_path / "b", threads=2) == EXIT_OK
    a, b = csv_bytes(tmp_path / "a"), csv_bytes(tmp_path / "b")
    assert a and a == b


def test_seed_changes_outputs(tmp_path):
    path = write_config(
        tmp_path / "c.json", experiment="sweep", decoder={"kind": "wiener"}, scenes={"count": 1},
        sweep={"fractions": [0.5], "trials_per_point": 2},
    )
    run(path, out_dir=tmp_path / "a", seed=1)
    run(path, out_dir=tmp_path / "b", seed=2)
    assert csv_bytes(tmp_path / "a") != csv_bytes(tmp_path / "b")


def test_manifest(tmp_path, monkeypatch):
    monkeypatch.setenv("LENSCRYPT_THREADS", "3")
    assert main(["keybound", "--out-dir", str(tmp_path), "--threads", "1", "--seed", "4"]) == EXIT_OK
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["threads"] == 3 and m["seed"] == 4 and m["experiment"] == "keybound"
    assert len(m["config_sha256"]) == 64 and {"numpy", "scipy", "python", "lenscrypt"} <= set(m["versions"])
    assert m["skipped_inputs"] == []


def test_encrypt_then_decrypt(tmp_path):
    enc = write_config(tmp_path / "enc.json", experiment="encrypt", scenes={"count": 2}, noise={"snr_db": None})
    assert run(enc, out_dir=tmp_path / "enc") == EXIT_OK
    assert sorted(p.name for p in (tmp_path / "enc" / "ciphertext").glob("*.f32")) == ["000.f32", "001.f32"]
    dec = write_config(
        tmp_path / "dec.json",
        experiment="decrypt",
        decoder={"kind": "admm"},
        inputs={"measurement_dir": "enc/ciphertext", "plaintext_dir": "enc/plaintext"},
    )
    assert run(dec, out_dir=tmp_path / "dec") == EXIT_OK
    rows = read_csv(tmp_path / "dec" / "decrypt.csv")
    assert len(rows) == 2 and all(float(r["psnr_db"]) > 25 for r in rows)
    assert (tmp_path / "dec" / "recon" / "000.png").exists()
    assert (tmp_path / "dec" / "recon" / "000.f32.json").exists()


def test_key_from_file_and_psf(tmp_path):
    key = generate_uniform(DESK_SPEC, 21)
    (tmp_path / "key.bin").write_bytes(key.to_bytes())
    cfg = write_config(tmp_path / "c.json", experiment="psf", key={"mode": "file", "path": "key.bin"})
    assert run(cfg, out_dir=tmp_path / "out") == EXIT_OK
    assert MaskPattern.from_json((tmp_path / "out" / "pattern.json").read_text()) == key
    assert (tmp_path / "out" / "psf.png").exists() and (tmp_path / "out" / "psf.f32").exists()


def test_ingested_scenes_and_skips_in_manifest(tmp_path):
    imgs = tmp_path / "imgs"
    imgs.mkdir()
    for i in range(2):
        Image.fromarray(np.full((80, 96), 60 * i, dtype=np.uint8)).save(imgs / f"s{i}.png")
    (imgs / "junk.png").write_bytes(b"\x00")
    cfg = write_config(tmp_path / "c.json", experiment="encrypt", scenes={"input_dir": "imgs"})
    assert run(cfg, out_dir=tmp_path / "out") == EXIT_OK
    m = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert m["skipped_inputs"] == ["junk.png"]
    assert [r["name"] for r in read_csv(tmp_path / "out" / "encrypt.csv")] == ["s0.png", "s1.png"]


def test_roc_from_scores_file(tmp_path):
    cfg = write_config(
        tmp_path / "a.json", experiment="auth-eval", decoder={"kind": "wiener"}, scenes={"count": 2},
        auth={"n_candidates": 3, "trials": 3, "score_kinds": ["data_fidelity"]},
    )
    assert run(cfg, out_dir=tmp_path / "auth") == EXIT_OK
    assert (tmp_path / "auth" / "confusion_data_fidelity.csv").exists()
    roc_cfg = write_config(tmp_path / "r.json", experiment="roc", inputs={"scores": "auth/scores.csv"})
    assert run(roc_cfg, out_dir=tmp_path / "roc") == EXIT_OK
    (row,) = read_csv(tmp_path / "roc" / "roc_summary.csv")
    assert float(row["auc"]) == pytest.approx(float(row["auc_mann_whitney"]), abs=1e-10)
    assert int(row["authentic"]) == 3 and int(row["impostor"]) == 6


def test_exit_code_config_error(tmp_path):
    assert run(write_config(tmp_path / "c.json", bogus=True), "keybound", out_dir=tmp_path) == EXIT_CONFIG
    assert run(tmp_path / "c.json", None, out_dir=tmp_path) == EXIT_CONFIG
    assert run(write_config(tmp_path / "d.json", experiment="sweep"), "psf", out_dir=tmp_path) == EXIT_CONFIG
    assert run(None, "decrypt", out_dir=tmp_path) == EXIT_CONFIG  # no measurement_dir


def test_exit_code_numerical_error(tmp_path):
    cfg = write_config(
        tmp_path / "c.json", experiment="psf",
        optics={"grid_pitch": 0.5e-3, "grid_size": 128, "sensor_size": 64, "wavelengths": [5.5e-7]},
    )
    assert run(cfg, out_dir=tmp_path / "out") == EXIT_NUMERICAL


def test_exit_code_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run(None, "keybound", out_dir=blocker / "out") == EXIT_IO


def test_argparse_requires_subcommand():
    with pytest.raises(SystemExit):
        main([])
