from __future__ import annotations

import math

import pytest

from ris_track.channel_sim import OfdmParams, Scatterer, Scenario
from ris_track.config import RunConfig, load_config
from ris_track.estimator import EstimatorConfig
from ris_track.geometry import Point2, RisPose
from ris_track.phase_codebook import build_schedule

OPT_RUN_SLOW = "run_slow"


def pytest_addoption(parser: pytest.Parser) -> None:
    group = parser.getgroup("ris-track")
    group.addoption(
        "--run-slow",
        dest=OPT_RUN_SLOW,
        action="store_true",
        default=False,
        help="Also run the Monte Carlo trend checks marked slow.",
    )


def pytest_collection_modifyitems(config: pytest.Config, items) -> None:
    if config.getoption(OPT_RUN_SLOW):
        return
    skip_slow = pytest.mark.skip(reason="slow Monte Carlo check; use --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


TX = Point2(0.0, 0.0)
RECEIVERS = (Point2(12.0, 0.0), Point2(14.0, 0.0), Point2(16.0, 0.0))

# Small numerology that keeps every test well under a second.
SMALL_OFDM = dict(n_subcarriers=64, delta_f=120e3, T=8, n_intervals=4)
SMALL_ESTIMATOR = EstimatorConfig(n_fft_tau=1024, n_fft_doppler=64)


@pytest.fixture
def small_ofdm() -> OfdmParams:
    return OfdmParams.from_power(power_dbm=30.0, **SMALL_OFDM)


@pytest.fixture
def small_est() -> EstimatorConfig:
    return SMALL_ESTIMATOR


@pytest.fixture
def ris_7_7() -> RisPose:
    return RisPose(position=Point2(7.0, 7.0), orientation_psi=math.pi / 6)


@pytest.fixture
def scenario_7_7(ris_7_7) -> Scenario:
    return Scenario(
        tx=TX,
        receivers=RECEIVERS,
        ris=(ris_7_7,),
        scatterers=(Scatterer(Point2(4.0, 10.0)), Scatterer(Point2(10.0, 12.0))),
    )


@pytest.fixture
def small_schedule():
    return build_schedule(1, 4, 4, SMALL_OFDM["T"], SMALL_OFDM["n_intervals"])


def tiny_overrides(**experiment) -> dict:
    exp = {"trials": 2, "seed": 7, "values": [60e3, 120e3], "workers": 1}
    exp.update(experiment)
    return {
        "ofdm": {"n_subcarriers": 64, "T": 8, "n_intervals": 4},
        "estimator": {"n_fft_tau": 1024, "n_fft_doppler": 64},
        "localizer": {"grid_step": 0.5, "restarts": 1},
        "calibration": {"trials": 3},
        "peb_map": {"step": 4.0},
        "tracking": {
            "alpha_var": 1e-4,
            "init": "truth",
            "paths": [{"name": "short", "position": [5.0, 6.0], "velocity": [10.0, 0.0],
                       "acceleration": [0.0, 2.0], "steps": 3}],
        },
        "experiment": exp,
    }


@pytest.fixture
def tiny_config() -> RunConfig:
    return load_config(None, overrides=[tiny_overrides()], env={})


TINY_TOML = """
[ofdm]
n_subcarriers = 64
T = 8
n_intervals = 4

[estimator]
n_fft_tau = 1024
n_fft_doppler = 64

[localizer]
grid_step = 0.5
restarts = 1

[calibration]
trials = 3

[peb_map]
step = 4.0

[tracking]
alpha_var = 1e-4
init = "truth"

[[tracking.paths]]
name = "short"
position = [5.0, 6.0]
velocity = [10.0, 0.0]
acceleration = [0.0, 2.0]
steps = 3

[experiment]
sweep = "delta_f"
values = [60e3, 120e3]
trials = 2
seed = 7
"""


@pytest.fixture
def tiny_config_file(tmp_path):
    p = tmp_path / "tiny.toml"
    p.write_text(TINY_TOML, encoding="utf-8")
    return p
