from __future__ import annotations

import math

import numpy as np
import pytest

from ris_track.errors import DegenerateGeometryError, EstimationError
from ris_track.estimator import Measurement
from ris_track.geometry import SPEED_OF_LIGHT, Anchors, Point2, path_length, sum_cosines_alpha
from ris_track.localizer import SolverConfig, localize, localize_toa_only, objective

from conftest import RECEIVERS, TX

PSI = math.pi / 6


def _exact(p_k, receivers=RECEIVERS, psi=PSI):
    return [
        Measurement(0, r, path_length(TX, p_r, p_k) / SPEED_OF_LIGHT, 0.0, sum_cosines_alpha(TX, p_r, p_k, psi), ())
        for r, p_r in enumerate(receivers)
    ]


def _noisy(p_k, rng, xi_sigma, alpha_sigma, *, with_variances=True):
    out = []
    for r, p_r in enumerate(RECEIVERS):
        xi = path_length(TX, p_r, p_k) + xi_sigma * rng.standard_normal()
        alpha = sum_cosines_alpha(TX, p_r, p_k, PSI) + alpha_sigma * rng.standard_normal()
        variances = (xi_sigma**2, alpha_sigma**2) if with_variances else (None, None)
        out.append(Measurement(0, r, xi / SPEED_OF_LIGHT, 0.0, alpha, (), *variances))
    return out


def _dist(result, p_k):
    return math.dist((result.p_hat.x, result.p_hat.y), p_k)


def test_objective_vanishes_at_truth_and_grows_away():
    anchors = Anchors(TX, RECEIVERS)
    meas = _exact((7.0, 7.0))
    assert objective((7.0, 7.0), meas, anchors, PSI) == pytest.approx(0.0, abs=1e-20)
    assert objective((7.5, 7.0), meas, anchors, PSI) > 0.0


def test_objective_at_anchor_raises():
    anchors = Anchors(TX, RECEIVERS)
    with pytest.raises(DegenerateGeometryError):
        objective((12.0, 0.0), _exact((7.0, 7.0)), anchors, PSI)


@pytest.mark.parametrize("p_k", [(7.0, 7.0), (3.0, 11.0), (14.6, 4.2)])
def test_localize_recovers_exact_position(p_k):
    result = localize(_exact(p_k), Anchors(TX, RECEIVERS), PSI)
    assert _dist(result, p_k) < 1e-3
    assert result.objective < 1e-8
    assert result.accepted
    row = result.as_dict()
    assert set(row) == {"x_hat", "y_hat", "objective", "iterations", "converged", "chi2", "rejected"}
    assert math.isnan(row["chi2"])


def test_localize_recovers_random_positions_within_tolerance():
    cfg = SolverConfig()
    anchors = Anchors(TX, RECEIVERS)
    rng = np.random.default_rng(2024)
    for _ in range(100):
        p_k = (float(rng.uniform(0.5, 15.5)), float(rng.uniform(1.5, 13.5)))
        result = localize(_exact(p_k), anchors, PSI, cfg)
        assert _dist(result, p_k) < cfg.refine_tol, p_k


def test_refined_objective_is_below_every_grid_value():
    cfg = SolverConfig(grid_step=0.5)
    anchors = Anchors(TX, RECEIVERS)
    meas = _noisy((7.0, 7.0), np.random.default_rng(5), 0.05, 0.02, with_variances=False)
    result = localize(meas, anchors, PSI, cfg)
    grid_values = [objective(p, meas, anchors, PSI) for p in cfg.grid()]
    assert result.objective <= min(grid_values)
    assert result.objective == pytest.approx(objective(result.p_hat, meas, anchors, PSI))


def test_localize_with_per_receiver_psi():
    psis = (0.2, 0.5, -0.1)
    meas = [
        Measurement(0, r, path_length(TX, p_r, (6.0, 9.0)) / SPEED_OF_LIGHT, 0.0,
                    sum_cosines_alpha(TX, p_r, (6.0, 9.0), psis[r]), ())
        for r, p_r in enumerate(RECEIVERS)
    ]
    result = localize(meas, Anchors(TX, RECEIVERS), psis)
    assert _dist(result, (6.0, 9.0)) < 1e-3


def test_toa_only_with_three_receivers():
    result = localize_toa_only(_exact((7.0, 7.0)), Anchors(TX, RECEIVERS))
    assert _dist(result, (7.0, 7.0)) < 1e-2


def test_toa_only_with_one_receiver_is_flagged():
    rx = (Point2(12.0, 0.0),)
    result = localize_toa_only(_exact((7.0, 7.0), receivers=rx), Anchors(TX, rx))
    assert result.converged is False
    assert "ambiguous" in result.message


def test_single_receiver_with_alpha_still_localizes():
    rx = (Point2(12.0, 0.0),)
    result = localize(_exact((7.0, 7.0), receivers=rx), Anchors(TX, rx), PSI,
                      SolverConfig(x_bounds=(6.0, 8.0), y_bounds=(6.0, 8.0)))
    assert result.objective < 1e-6
    assert _dist(result, (7.0, 7.0)) < 1e-3


def test_inverse_variance_weights_discount_a_noisy_receiver():
    anchors = Anchors(TX, RECEIVERS)
    p_k = (7.0, 7.0)
    biased = [
        Measurement(m.ris, m.receiver, m.tau_hat + (0.5 / SPEED_OF_LIGHT if m.receiver == 0 else 0.0), 0.0, m.alpha_hat, ())
        for m in _exact(p_k)
    ]
    equal = localize(biased, anchors, PSI)
    assert _dist(equal, p_k) > 1e-2

    weighted = [
        Measurement(m.ris, m.receiver, m.tau_hat, 0.0, m.alpha_hat, (), 1e6 if m.receiver == 0 else 1e-6, 1e-6)
        for m in biased
    ]
    result = localize(weighted, anchors, PSI)
    assert _dist(result, p_k) < 1e-3
    assert result.accepted
    assert result.chi2 < 1e-3


def test_weights_without_variances_for_every_receiver_fall_back_to_constants():
    anchors = Anchors(TX, RECEIVERS)
    meas = _noisy((7.0, 7.0), np.random.default_rng(1), 0.05, 0.02)
    partial = meas[:2] + [Measurement(0, 2, meas[2].tau_hat, 0.0, meas[2].alpha_hat, ())]
    result = localize(partial, anchors, PSI)
    bare = localize(_noisy((7.0, 7.0), np.random.default_rng(1), 0.05, 0.02, with_variances=False), anchors, PSI)
    assert math.isnan(result.chi2)
    assert result.p_hat == bare.p_hat


@pytest.mark.parametrize(
    "xi_sigma, alpha_sigma",
    [
        (0.01, 0.2),   # accurate path lengths, alpha adds little
        (0.3, 0.005),  # alpha carries the position
    ],
)
def test_weighted_estimate_is_no_worse_than_toa_only(xi_sigma, alpha_sigma):
    anchors = Anchors(TX, RECEIVERS)
    rng = np.random.default_rng(11)
    p_k = (7.0, 7.0)
    prop, toa = [], []
    for _ in range(50):
        meas = _noisy(p_k, rng, xi_sigma, alpha_sigma)
        prop.append(_dist(localize(meas, anchors, PSI), p_k))
        toa.append(_dist(localize_toa_only(meas, anchors), p_k))
    assert np.mean(prop) <= 1.05 * np.mean(toa)


def test_estimate_outside_search_region_is_rejected():
    result = localize(_exact((7.0, 30.0)), Anchors(TX, RECEIVERS), PSI)
    assert result.p_hat.y > 14.25
    assert result.rejected == "outside search region"
    assert not result.accepted
    assert result.as_dict()["rejected"] == "outside search region"


def test_inconsistent_measurements_fail_the_residual_test():
    anchors = Anchors(TX, RECEIVERS)
    meas = [
        Measurement(m.ris, m.receiver, m.tau_hat + (1.0 / SPEED_OF_LIGHT if m.receiver == 1 else 0.0), 0.0, m.alpha_hat, (),
                    1e-4, 1e-6)
        for m in _exact((7.0, 7.0))
    ]
    result = localize(meas, anchors, PSI)
    assert result.rejected.startswith("residual test failed")
    assert result.chi2 > 100.0

    assert localize(meas, anchors, PSI, SolverConfig(gate_pvalue=0.0)).accepted


def test_single_receiver_toa_has_no_residual_test():
    rx = (Point2(12.0, 0.0),)
    meas = [Measurement(0, 0, path_length(TX, rx[0], (7.0, 7.0)) / SPEED_OF_LIGHT, 0.0, 0.0, (), 1e-4, 1e-6)]
    result = localize_toa_only(meas, Anchors(TX, rx))
    assert result.accepted
    assert result.chi2 == pytest.approx(0.0, abs=1e-6)


def test_measurement_count_must_match_receivers():
    with pytest.raises(EstimationError):
        localize(_exact((7.0, 7.0))[:2], Anchors(TX, RECEIVERS), PSI)
    with pytest.raises(EstimationError):
        localize([], Anchors(TX, RECEIVERS), PSI)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"grid_step": 0.0},
        {"restarts": 0},
        {"x_bounds": (5.0, 5.0)},
        {"weights": (1.0, -1.0)},
        {"refine_tol": 0.0},
        {"gate_pvalue": 1.0},
        {"gate_pvalue": -1e-3},
    ],
)
def test_solver_config_validation(kwargs):
    with pytest.raises(ValueError):
        SolverConfig(**kwargs)


def test_grid_covers_bounds():
    cfg = SolverConfig(x_bounds=(0.0, 1.0), y_bounds=(2.0, 3.0), grid_step=0.5)
    grid = cfg.grid()
    assert grid.shape == (9, 2)
    assert grid.min(axis=0).tolist() == [0.0, 2.0]
    assert grid.max(axis=0).tolist() == [1.0, 3.0]
    assert cfg.contains((1.2, 3.0), margin=0.5)
    assert not cfg.contains((1.2, 3.0))
