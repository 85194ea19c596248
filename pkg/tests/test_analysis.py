import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lenscrypt.analysis import (
    STANDARD_FRACTIONS,
    SpectralRadiusError,
    SweepRecord,
    bruteforce_sweep,
    effective_key_length,
    keyspace_bound,
    linear_fit_r2,
    mismatch_series,
    random_mismatch_system,
    relative_psf_error,
    spearman,
    summarize_sweep,
)
from lenscrypt.forward import NoiseModel
from lenscrypt.mask import DESK_SPEC, perturb
from lenscrypt.optics import DESK_OPTICS, Psf, simulate_psf
from lenscrypt.recon import Decoder
from lenscrypt.scenes import synthetic_scenes


# -- key-space bound --------------------------------------------------------------


def test_keyspace_bound_prototype_figures():
    assert keyspace_bound(128, 8, 1404).ratio == pytest.approx(0.0304, abs=1e-4)
    assert keyspace_bound(256, 8, 1404).ratio == pytest.approx(0.0608, abs=1e-4)
    assert keyspace_bound(0, 8, 1404) == (0.0, False)


def test_keyspace_bound_over_capacity():
    b = keyspace_bound(10_000, 8, 1404)
    assert b.ratio == 1.0 and b.over_capacity


@pytest.mark.parametrize("args", [(-1, 8, 10), (8, 1, 10), (8, 8, 0)])
def test_keyspace_bound_rejects_bad_input(args):
    with pytest.raises(ValueError):
        keyspace_bound(*args)


@pytest.mark.parametrize(
    "args, bits", [((0.6, 8, 1404), 2527), ((1.0, 2, 128), 128), ((0.5, 4, 100), 100)]
)
def test_effective_key_length(args, bits):
    assert effective_key_length(*args) == bits


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 256), st.integers(1, 5000), st.data())
def test_bound_and_key_length_are_inverse(base, n, data):
    k = data.draw(st.integers(1, int(n * math.log2(base))))
    w = keyspace_bound(k, base, n).ratio
    assert effective_key_length(w, base, n) in (k - 1, k)


# -- relative PSF error ---------------------------------------------------------


def test_relative_psf_error_basics(desk_psf):
    assert relative_psf_error(desk_psf, desk_psf) == 0.0
    raw = Psf(desk_psf.planes, "raw")
    double = Psf(2 * desk_psf.planes, "raw")
    assert relative_psf_error(raw, double) == pytest.approx(1.0)
    assert relative_psf_error(raw, double, squared=False) == pytest.approx(1.0)


def test_relative_psf_error_rejects_bad_pairs(desk_psf):
    with pytest.raises(ValueError):
        relative_psf_error(Psf(np.zeros((1, 64, 64))), desk_psf)
    with pytest.raises(ValueError):
        relative_psf_error(desk_psf, Psf(np.ones((1, 32, 32))))
    with pytest.raises(ValueError):
        relative_psf_error(desk_psf, Psf(desk_psf.planes, "raw"))


def test_relative_psf_error_is_linear_in_fraction_wrong(desk_key, desk_psf):
    f = np.round(np.arange(1, 10) / 10, 1)
    means = [
        np.mean(
            [
                relative_psf_error(desk_psf, simulate_psf(DESK_SPEC, perturb(desk_key, fi, s), DESK_OPTICS))
                for s in range(10)
            ]
        )
        for fi in f
    ]
    assert linear_fit_r2(f, means) >= 0.95


# -- mismatch series ------------------------------------------------------------


def test_mismatch_without_error_is_exact():
    rng = np.random.default_rng(0)
    H = 3 * np.eye(5) + rng.standard_normal((5, 5))
    x, n = rng.standard_normal(5), rng.standard_normal(5)
    res = mismatch_series(H, np.zeros((5, 5)), x, n, 10)
    expected = x + np.linalg.solve(H, n)
    np.testing.assert_allclose(res.direct, expected, rtol=1e-12)
    np.testing.assert_array_equal(res.series, expected)
    assert not np.any(res.error_term)


def test_mismatch_geometric_series():
    x = np.arange(1.0, 5.0)
    res = mismatch_series(np.eye(4), 0.5 * np.eye(4), x, np.zeros(4), 60)
    np.testing.assert_allclose(res.direct, 2 * x, rtol=0, atol=1e-15 * 4)
    np.testing.assert_allclose(res.series, 2 * x, rtol=0, atol=1e-15 * 4)
    assert res.spectral_radius == pytest.approx(0.5)


def test_mismatch_random_systems():
    rng = np.random.default_rng(1)
    for _ in range(20):
        H, D, x, n = random_mismatch_system(rng, 8, 0.3)
        assert mismatch_series(H, D, x, n, 50).relative_gap < 1e-6


def test_mismatch_truncation_error_is_monotone():
    rng = np.random.default_rng(2)
    H, D, x, n = random_mismatch_system(rng, 8, 0.5)
    gaps = [mismatch_series(H, D, x, n, k).relative_gap for k in range(0, 60)]
    above = [g for g in gaps if g > 1e-13]
    assert len(above) > 10
    assert np.all(np.diff(above) < 0)


def test_mismatch_refuses_divergent_series():
    with pytest.raises(SpectralRadiusError, match="diverges"):
        mismatch_series(np.eye(3), 1.5 * np.eye(3), np.ones(3), np.zeros(3), 5)
    with pytest.raises(ValueError):
        mismatch_series(np.eye(3), 0.1 * np.eye(3), np.ones(3), np.zeros(3), -1)


# -- sweep ----------------------------------------------------------------------


WIENER = Decoder("wiener", noise_floor=1e-3)


def test_sweep_row_count_and_order(desk_key):
    scenes = synthetic_scenes(3, 64, 0)
    recs = bruteforce_sweep(scenes, desk_key, STANDARD_FRACTIONS, 5, WIENER, DESK_OPTICS, seed=3)
    assert len(recs) == 55
    # ordered by perturbed fraction, so fraction_correct runs 1.0 down to 0.0
    assert [r.fraction_correct for r in recs[::5]] == sorted({r.fraction_correct for r in recs}, reverse=True)
    assert {r.scene_index for r in recs} == {0, 1, 2}
    assert all(r.decoder == "wiener" and not r.error for r in recs)


def test_sweep_is_deterministic_and_thread_independent(desk_key):
    scenes = synthetic_scenes(2, 64, 0)
    args = (scenes, desk_key, [0.0, 0.5, 1.0], 3, WIENER, DESK_OPTICS)
    a = bruteforce_sweep(*args, noise=NoiseModel(40, seed=1), seed=9)
    b = bruteforce_sweep(*args, noise=NoiseModel(40, seed=1), seed=9, threads=3)
    assert a == b
    c = bruteforce_sweep(*args, noise=NoiseModel(40, seed=1), seed=10)
    assert a != c


def test_sweep_endpoints(desk_key):
    scenes = synthetic_scenes(10, 64, 5)
    recs = bruteforce_sweep(
        scenes, desk_key, [0.0, 0.5, 1.0], 10, Decoder(), DESK_OPTICS, noise=NoiseModel(40), seed=0
    )
    summary = {row["fraction_correct"]: row for row in summarize_sweep(recs)}
    assert summary[1.0]["relative_psf_error_mean"] == 0.0
    assert summary[1.0]["psnr_db_mean"] == max(row["psnr_db_mean"] for row in summary.values())
    assert summary[1.0]["psnr_db_mean"] > summary[0.5]["psnr_db_mean"] > summary[0.0]["psnr_db_mean"]


def test_sweep_records_decoder_failures(desk_key, monkeypatch):
    calls = []

    class Flaky:
        kind = "flaky"

        def __call__(self, meas, psf):
            calls.append(1)
            if len(calls) % 2 == 0:
                raise FloatingPointError("overflow in test decoder")
            return WIENER(meas, psf)

    recs = bruteforce_sweep(synthetic_scenes(1, 64, 0), desk_key, [0.0, 1.0], 2, Flaky(), DESK_OPTICS)
    failed = [r for r in recs if r.error]
    assert len(recs) == 4 and len(failed) == 2
    assert all(math.isnan(r.psnr_db) and "overflow" in r.error for r in failed)


def test_sweep_rejects_empty_inputs(desk_key):
    with pytest.raises(ValueError):
        bruteforce_sweep([], desk_key, [0.0], 1, WIENER, DESK_OPTICS)
    with pytest.raises(ValueError):
        bruteforce_sweep(synthetic_scenes(1, 64, 0), desk_key, [], 1, WIENER, DESK_OPTICS)


def test_summary_statistics():
    recs = [SweepRecord(0.5, p, 0.1, 0.2, 0, "x") for p in (10.0, 12.0)]
    recs.append(SweepRecord(0.5, float("nan"), float("nan"), float("nan"), 0, "x", error="boom"))
    (row,) = summarize_sweep(recs)
    assert row["n"] == 2 and row["psnr_db_mean"] == 11.0 and row["psnr_db_std"] == 1.0


def test_record_validation():
    with pytest.raises(ValueError):
        SweepRecord(1.5, 0, 0, 0, 0, "x")


def test_rank_and_fit_helpers():
    x = np.arange(10.0)
    assert spearman(x, x**3) == pytest.approx(1.0)
    assert linear_fit_r2(x, 2 * x + 1) == pytest.approx(1.0)
