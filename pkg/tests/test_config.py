from __future__ import annotations

import math
import os

import pytest

from ris_track.config import (
    DEFAULTS,
    ENV_CONFIG,
    apply_sweep,
    extend_receivers,
    load_config,
    parse_overrides,
)
from ris_track.errors import ConfigError
from ris_track.geometry import Point2

DEFAULT_TOML = os.path.join(os.path.dirname(__file__), os.pardir, "configs", "default.toml")


def test_builtin_defaults_are_valid():
    cfg = load_config(None, env={})
    assert cfg.source is None
    assert cfg.n_ris == 2
    sched = cfg.schedule()
    assert sched.omega.shape == (2, 16)
    assert sched.n_intervals == 8
    ofdm = cfg.ofdm()
    assert ofdm.n_subcarriers == 512
    assert ofdm.power_dbm == pytest.approx(30.0)
    assert cfg.estimator().n_fft_tau == 8192
    solver = cfg.solver()
    assert solver.x_bounds == (0.0, 16.0)
    assert solver.y_bounds == (1.0, 14.0)


def test_shipped_default_file_matches_builtin_defaults():
    assert load_config(DEFAULT_TOML, env={}).hash == load_config(None, env={}).hash


def test_config_file_from_env_and_overrides_in_order(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text('[ofdm]\ndelta_f = 60e3\nT = 8\n\n[experiment]\nsweep = "power_dbm"\n', encoding="utf-8")

    cfg = load_config(None, env={ENV_CONFIG: str(p)})
    assert cfg.source == str(p)
    assert cfg["ofdm"]["delta_f"] == 60e3
    assert cfg["ofdm"]["T"] == 8
    assert cfg["experiment"]["sweep"] == "power_dbm"
    assert cfg["ofdm"]["n_subcarriers"] == 512

    cfg = load_config(str(p), overrides=[{"ofdm": {"T": 4}}, {"ofdm": {"T": 32}}], env={})
    assert cfg["ofdm"]["T"] == 32


def test_array_entries_take_defaults(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text("[[scenario.ris]]\nposition = [3.0, 9.0]\n", encoding="utf-8")
    cfg = load_config(str(p), env={})
    (pose,) = cfg.ris_poses()
    assert pose.position == Point2(3.0, 9.0)
    assert pose.orientation_psi == pytest.approx(math.pi / 6)
    assert pose.num_elements == 4


@pytest.mark.parametrize(
    "update, field",
    [
        ({"ofdm": {"bogus": 1}}, "ofdm.bogus"),
        ({"nosuch": {"a": 1}}, "nosuch"),
        ({"scenario": {"ris": [{"position": [1.0, 1.0], "colour": "red"}]}}, "scenario.ris[0]"),
        ({"ofdm": {"T": 0}}, "ofdm.T"),
        ({"ofdm": {"delta_f": -1.0}}, "ofdm.delta_f"),
        ({"estimator": {"refine_delay": "yes"}}, "estimator.refine_delay"),
        ({"scenario": {"tx": [0.0]}}, "scenario.tx"),
        ({"scenario": {"map_x": [5.0, 1.0]}}, "scenario.map_x"),
        ({"tracking": {"init": "guess"}}, "tracking.init"),
        ({"tracking": {"process_noise": [1.0, 1.0]}}, "tracking.process_noise"),
        ({"experiment": {"sweep": "bandwidth"}}, "experiment.sweep"),
        ({"experiment": {"values": []}}, "experiment.values"),
        ({"scenario": {"ris": [{"psi_per_rx": [0.1]}]}}, "scenario.ris[0].psi_per_rx"),
        ({"scenario": {"ris": [{"num_elements": 4}, {"num_elements": 8}]}}, "scenario.ris"),
        ({"localizer": {"weights": [1.0, -1.0]}}, "localizer.weights"),
        ({"localizer": {"weights": ["heavy", 1.0]}}, "localizer.weights"),
        ({"localizer": {"weights": [0.0, 0.0]}}, "localizer.weights"),
        ({"localizer": {"weights": [1.0]}}, "localizer.weights"),
        ({"localizer": {"gate_pvalue": 1.0}}, "localizer.gate_pvalue"),
        ({"localizer": {"gate_pvalue": -1e-3}}, "localizer.gate_pvalue"),
    ],
)
def test_invalid_values_name_the_field(update, field):
    with pytest.raises(ConfigError) as excinfo:
        load_config(None, overrides=[update], env={})
    assert excinfo.value.field == field
    assert field in str(excinfo.value)


def test_toml_syntax_error_reports_line(tmp_path):
    p = tmp_path / "broken.toml"
    p.write_text("[ofdm]\nT = 8\ndelta_f = = 3\n", encoding="utf-8")
    with pytest.raises(ConfigError) as excinfo:
        load_config(str(p), env={})
    assert excinfo.value.line is not None and excinfo.value.line >= 2
    assert "line" in str(excinfo.value)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read config file"):
        load_config(str(tmp_path / "absent.toml"), env={})


def test_parse_overrides():
    update = parse_overrides(["ofdm.delta_f=60e3", "experiment.sweep = n_rx", "scenario.rx=[[1.0, 0.0]]",
                              "estimator.refine_delay=false"])
    assert update == {
        "ofdm": {"delta_f": 60e3},
        "experiment": {"sweep": "n_rx"},
        "scenario": {"rx": [[1.0, 0.0]]},
        "estimator": {"refine_delay": False},
    }
    for bad in ("delta_f=1", "ofdm.delta_f", "=3"):
        with pytest.raises(ConfigError):
            parse_overrides([bad])


def test_hash_is_stable_and_ignores_output_settings():
    base = load_config(None, env={})
    assert base.hash == load_config(None, env={}).hash
    assert len(base.hash) == 64
    moved = base.with_updates({"experiment": {"out": "elsewhere", "workers": 4}})
    assert moved.hash == base.hash
    assert base.with_updates({"ofdm": {"delta_f": 60e3}}).hash != base.hash


def test_with_updates_does_not_touch_the_original():
    base = load_config(None, env={})
    base.with_updates({"scenario": {"rx": [[1.0, 0.0]]}})
    assert base["scenario"]["rx"] == DEFAULTS["scenario"]["rx"]


def test_apply_sweep_variables():
    cfg = load_config(None, env={})
    assert apply_sweep(cfg, "delta_f", 60e3)["ofdm"]["delta_f"] == 60e3
    assert apply_sweep(cfg, "N_T", 4)["ofdm"]["n_intervals"] == 4
    assert apply_sweep(cfg, "T", 8)["ofdm"]["T"] == 8

    fixed = apply_sweep(cfg, "delta_f_fixed_bw", 60e3)["ofdm"]
    assert (fixed["n_subcarriers"], fixed["delta_f"]) == (1024, 60e3)
    fixed = apply_sweep(cfg, "n_subcarriers_fixed_bw", 256)["ofdm"]
    assert (fixed["n_subcarriers"], fixed["delta_f"]) == (256, 240e3)

    assert apply_sweep(cfg, "n_rx", 5)["scenario"]["rx"] == [
        [12.0, 0.0], [14.0, 0.0], [16.0, 0.0], [18.0, 0.0], [20.0, 0.0]
    ]
    assert apply_sweep(cfg, "n_rx", 1)["scenario"]["rx"] == [[12.0, 0.0]]

    moved = apply_sweep(cfg, "ris_x", 3.0)
    assert moved["scenario"]["ris"][0]["position"] == [3.0, 7.0]
    assert cfg["scenario"]["ris"][0]["position"] == [7.0, 7.0]
    assert apply_sweep(cfg, "ris_y", 11.0)["scenario"]["ris"][0]["position"] == [7.0, 11.0]

    with pytest.raises(ConfigError):
        apply_sweep(cfg, "colour", 1.0)


@pytest.mark.parametrize(
    "variable, value",
    [("delta_f", 30e3), ("delta_f", 240e3), ("n_subcarriers", 128), ("n_subcarriers", 2048)],
)
def test_band_sweeps_keep_symbol_energy(variable, value):
    cfg = load_config(None, env={})
    base = cfg.ofdm()
    point = apply_sweep(cfg, variable, value).ofdm()
    assert point.symbol_energy == pytest.approx(base.symbol_energy, rel=1e-12)
    assert point.snr_per_entry == pytest.approx(base.snr_per_entry, rel=1e-12)
    band_ratio = point.n_subcarriers * point.delta_f / (base.n_subcarriers * base.delta_f)
    assert point.power_dbm == pytest.approx(30.0 + 10 * math.log10(band_ratio))


def test_fixed_bandwidth_sweeps_keep_total_power():
    cfg = load_config(None, env={})
    for variable, value in (("delta_f_fixed_bw", 60e3), ("n_subcarriers_fixed_bw", 256)):
        point = apply_sweep(cfg, variable, value).ofdm()
        assert point.power_dbm == pytest.approx(30.0)
        assert point.symbol_energy == pytest.approx(cfg.ofdm().symbol_energy)


def test_solver_from_config():
    cfg = load_config(None, overrides=[{"localizer": {"weights": [2.0, 0.5], "gate_pvalue": 0.0}}], env={})
    solver = cfg.solver()
    assert solver.weights == (2.0, 0.5)
    assert solver.gate_pvalue == 0.0
    assert load_config(None, env={}).solver().gate_pvalue == pytest.approx(1e-6)


def test_extend_receivers_needs_a_step():
    with pytest.raises(ConfigError):
        extend_receivers([[12.0, 0.0]], 2)
    with pytest.raises(ConfigError):
        extend_receivers([[12.0, 0.0]], 0)


def test_scenario_and_paths_from_defaults():
    cfg = load_config(None, env={})
    scenario = cfg.scenario()
    assert scenario.tx == Point2(0.0, 0.0)
    assert scenario.n_receivers == 3
    assert len(scenario.ris) == 1
    assert len(scenario.scatterers) == 3

    paths = cfg.tracking_paths()
    assert [p.name for p in paths] == ["path1", "path2", "path3", "path4"]
    pos, vel = paths[0].state_at(1.0)
    assert pos == Point2(13.0, 6.0)
    assert vel == (10.0, 2.0)
