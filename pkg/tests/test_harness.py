from __future__ import annotations

import math
import os
from dataclasses import replace

import pytest

from ris_track import harness, reports
from ris_track.config import apply_sweep, load_config
from ris_track.errors import EstimationError

from conftest import tiny_overrides


def test_mix_seed_reference_value_and_distinct_trial_seeds():
    assert harness.mix_seed(0) == 0xE220A8397B1DCDAF
    seeds = [harness.trial_seed(42, i) for i in range(1000)]
    assert len(set(seeds)) == 1000
    assert all(0 <= s < 2**64 for s in seeds)
    assert harness.trial_seed(0, 5) == harness.mix_seed(5)


def test_empirical_cdf_skips_nan():
    assert harness.empirical_cdf([0.3, float("nan"), 0.1]) == [(0.1, 0.5), (0.3, 1.0)]
    assert harness.empirical_cdf([]) == []


def test_trial_frames_add_random_ris_away_from_anchors(tiny_config):
    scenario, sched, frames = harness.trial_frames(tiny_config, 123)
    assert len(scenario.ris) == 2
    assert sched.n_ris == 2
    assert frames.n_receivers == 3
    extra = scenario.ris[1].position
    assert 0.0 <= extra.x <= 16.0 and 1.0 <= extra.y <= 14.0
    assert all(extra.distance_to(a) >= 0.5 for a in scenario.anchors.points())
    again, _, _ = harness.trial_frames(tiny_config, 123)
    assert again.ris[1].position == extra


def test_localization_sweep_writes_summary_and_trials(tiny_config, tmp_path):
    result = harness.run_localization_sweep(tiny_config, str(tmp_path), dump_frames=True)

    names = sorted(os.path.basename(f) for f in result.files)
    assert names == ["frames.bin", "localize_summary.csv", "localize_trials.csv", "schedule.json"]
    assert [row["value"] for row in result.summary] == [60e3, 120e3]
    assert len(result.trials) == 2 * 2 * 2
    for row in result.summary:
        assert row["trials"] == 2
        assert 0 <= row["failed"] < 2
        assert math.isfinite(row["mean_err"])
        assert row["peb_m"] is None or row["peb_m"] > 0

    summary_csv = tmp_path / "localize_summary.csv"
    assert reports.read_config_hash(str(summary_csv)) == tiny_config.hash
    rows = reports.read_csv(str(summary_csv))
    assert list(rows[0]) == harness.SUMMARY_FIELDS
    assert reports.load_frames(str(tmp_path / "frames.bin")).n_receivers == 3


def test_localization_sweep_is_reproducible(tiny_config, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    harness.run_localization_sweep(tiny_config, str(a))
    harness.run_localization_sweep(tiny_config, str(b))
    for name in ("localize_summary.csv", "localize_trials.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_localization_sweep_does_not_depend_on_worker_count(tmp_path):
    serial = load_config(None, overrides=[tiny_overrides(values=[120e3])], env={})
    pooled = load_config(None, overrides=[tiny_overrides(values=[120e3], workers=2)], env={})
    harness.run_localization_sweep(serial, str(tmp_path / "one"))
    harness.run_localization_sweep(pooled, str(tmp_path / "two"))
    assert (tmp_path / "one" / "localize_trials.csv").read_bytes() == (
        tmp_path / "two" / "localize_trials.csv"
    ).read_bytes()


def test_calibrate_noise(tiny_config, tmp_path):
    result = harness.calibrate_noise(tiny_config, str(tmp_path))
    assert [r["receiver"] for r in result.rows] == [0, 1, 2]
    assert all(r["trials"] == 3 for r in result.rows)
    assert result.alpha_mse.shape == (3,)
    assert all(math.isfinite(v) for v in result.xi_mse)
    assert all(r["xi_crlb"] > 0 and r["alpha_crlb"] > 0 for r in result.rows)
    assert len(reports.read_csv(str(tmp_path / "calibration.csv"))) == 3


def test_tracking_experiment(tiny_config, tmp_path):
    result = harness.run_tracking_experiment(tiny_config, str(tmp_path))
    assert [r["step"] for r in result.rows] == [0, 1, 2, 3]
    assert result.rows[0]["x_true"] == 5.0
    assert result.rows[0]["innovation_norm"] is None
    assert result.rows[3]["t"] == pytest.approx(0.15)
    (summary,) = result.summary
    assert summary["path"] == "short"
    assert summary["steps"] == 3
    assert 0 <= summary["skipped_updates"] <= 3
    for name in ("track.csv", "track_summary.csv", "track_cdf.csv", "schedule.json"):
        assert (tmp_path / name).exists()
    cdf = reports.read_csv(str(tmp_path / "track_cdf.csv"))
    assert {row["path"] for row in cdf} <= {"short", "all"}
    assert all(0.0 < float(row["cdf"]) <= 1.0 for row in cdf)


def test_tracking_noise_from_crlb(tiny_config):
    cfg = tiny_config.with_updates({"tracking": {"noise_mode": "crlb"}})
    scenario = cfg.scenario()
    C = harness.measurement_noise(cfg, scenario, 0)
    assert C.shape == (6, 6)
    assert all(v > 0 for v in C.diagonal())


def test_peb_map_marks_kink_cells_missing(tiny_config, tmp_path):
    result = harness.run_peb_map(tiny_config, str(tmp_path), dump_fim=True)
    assert len(result.rows) == 12
    missing = [(r["x"], r["y"]) for r in result.rows if r["peb_m"] is None]
    # Cells straight above the receiver at x = 14 sit on a kink of the alpha model.
    assert missing == [(14.0, 3.0), (14.0, 7.0), (14.0, 11.0)]
    assert result.missing == 3
    written = reports.read_csv(str(tmp_path / "peb_map.csv"))
    assert [row["peb_m"] for row in written if row["x"] == "14.0"] == ["", "", ""]
    fim = reports.read_csv(str(tmp_path / "fim_eta.csv"))
    assert [row["param"] for row in fim][:2] == ["p_x[0]", "p_y[0]"]
    assert len(fim) == 8


def test_peb_map_rejects_unknown_ris(tiny_config, tmp_path):
    cfg = tiny_config.with_updates({"peb_map": {"ris": 3}})
    with pytest.raises(EstimationError):
        harness.run_peb_map(cfg, str(tmp_path))


def test_summary_reports_power_of_each_sweep_point(tiny_config, tmp_path):
    result = harness.run_localization_sweep(tiny_config, str(tmp_path))
    low, high = result.summary
    assert low["power_dbm"] == pytest.approx(30.0 - 10 * math.log10(2))
    assert high["power_dbm"] == pytest.approx(30.0)
    for row in result.trials:
        assert row["rejected"] in ("", "no estimate", "outside search region") or row["rejected"].startswith(
            "residual test failed"
        )


def test_rejected_estimates_count_as_failed(tiny_config, tmp_path, monkeypatch):
    accept = harness.localize

    def reject(meas, anchors, psi, cfg):
        return replace(accept(meas, anchors, psi, cfg), rejected="outside search region")

    monkeypatch.setattr(harness, "localize", reject)
    result = harness.run_localization_sweep(tiny_config, str(tmp_path))
    for row in result.summary:
        assert row["failed"] == row["trials"] == 2
        assert math.isnan(row["mean_err"])
    assert all(row["rejected"] == "outside search region" for row in result.trials)
    assert all(math.isfinite(row["err"]) for row in result.trials)


def test_tracking_output_is_reproducible(tiny_config, tmp_path):
    harness.run_tracking_experiment(tiny_config, str(tmp_path / "a"))
    harness.run_tracking_experiment(tiny_config, str(tmp_path / "b"))
    for name in ("track.csv", "track_summary.csv", "track_cdf.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


@pytest.mark.parametrize(
    "variable, values",
    [("delta_f", [30e3, 60e3, 120e3, 240e3]), ("n_subcarriers", [128, 256, 512, 1024])],
)
def test_peb_falls_as_the_band_grows(variable, values):
    cfg = load_config(None, env={})
    pebs = [harness.single_ris_peb(apply_sweep(cfg, variable, v)) for v in values]
    assert all(p is not None and p > 0 for p in pebs)
    for wider, narrower in zip(pebs[1:], pebs):
        assert wider <= 1.01 * narrower
    assert pebs[-1] < 0.9 * pebs[0]


# Monte Carlo trend checks at the default numerology; run with --run-slow.


def _trend_config(**sections):
    update = {"scenario": {"random_ris": 0}, "experiment": {"seed": 1, "workers": 1}}
    for section, values in sections.items():
        update.setdefault(section, {}).update(values)
    return load_config(None, overrides=[update], env={})


def _sweep(tmp_path, variable, values, trials, **sections):
    cfg = _trend_config(**sections).with_updates(
        {"experiment": {"sweep": variable, "values": values, "trials": trials}}
    )
    return harness.run_localization_sweep(cfg, str(tmp_path)).summary


@pytest.mark.slow
def test_error_shrinks_with_power(tmp_path):
    low, high = _sweep(tmp_path, "power_dbm", [15.0, 30.0], 40)
    assert high["mean_err"] <= low["mean_err"]
    assert high["peb_m"] < low["peb_m"]
    assert low["mean_err"] < 1.0


@pytest.mark.slow
def test_error_versus_subcarrier_spacing(tmp_path):
    rows = _sweep(tmp_path, "delta_f", [30e3, 60e3, 120e3, 240e3], 150)
    errs = [r["mean_err"] for r in rows]
    for wider, narrower in zip(errs[1:], errs):
        assert wider <= 1.25 * narrower
    assert errs[-1] < errs[0]
    for r in rows:
        assert r["mean_err"] < r["mean_err_toa"]
        assert r["rmse"] >= 0.8 * r["peb_m"]
    assert max(r["mean_err_toa"] / r["mean_err"] for r in rows) >= 2.0


@pytest.mark.slow
def test_error_versus_subcarrier_count(tmp_path):
    rows = _sweep(tmp_path, "n_subcarriers", [128, 256, 512, 1024, 2048], 60)
    errs = [r["mean_err"] for r in rows]
    for more, fewer in zip(errs[1:], errs):
        assert more < 0.9 * fewer
    assert rows[-1]["mean_err"] <= rows[-1]["mean_err_toa"]


@pytest.mark.slow
@pytest.mark.parametrize("variable, values", [("N_T", [4, 8, 16]), ("T", [8, 16, 32])])
def test_longer_frames_lower_the_error(tmp_path, variable, values):
    rows = _sweep(tmp_path, variable, values, 60, ofdm={"k_max": 4})
    errs = [r["mean_err"] for r in rows]
    for longer, shorter in zip(errs[1:], errs):
        assert longer < shorter


@pytest.mark.slow
def test_measurement_error_is_not_below_the_bound():
    cfg = _trend_config(calibration={"trials": 200})
    result = harness.calibrate_noise(cfg)
    for row in result.rows:
        assert row["xi_mse"] >= 0.7 * row["xi_crlb"]
        assert row["alpha_mse"] >= 0.7 * row["alpha_crlb"]


TRACKING = {"process_noise": [1e-4, 1e-4, 1e-2, 1e-2], "quantization_scale": 0.25, "alpha_var": 1e-4}


@pytest.mark.slow
def test_tracking_beats_relocalization_and_settles(tmp_path):
    result = harness.run_tracking_experiment(_trend_config(tracking=TRACKING), str(tmp_path))
    for row in result.summary:
        assert row["mean_err_track"] < row["mean_err_reloc"], row["path"]
        assert row["last_quarter_err_track"] < row["first_quarter_err_track"], row["path"]


@pytest.mark.slow
@pytest.mark.parametrize("init_sigma", [0.0, 0.05, 0.2])
def test_tracking_recovers_from_initial_error(tmp_path, init_sigma):
    cfg = _trend_config(tracking={**TRACKING, "init": "truth", "init_sigma": init_sigma})
    result = harness.run_tracking_experiment(cfg, str(tmp_path))
    for row in result.summary:
        assert row["last_quarter_err_track"] < 0.15, row["path"]


@pytest.mark.slow
def test_default_sweep_csvs_are_byte_identical(tmp_path):
    for name in ("a", "b"):
        _sweep(tmp_path / name, "delta_f", [60e3, 120e3], 5)
    for name in ("localize_summary.csv", "localize_trials.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
