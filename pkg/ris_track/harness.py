"""Monte Carlo experiments.

Each experiment takes a resolved RunConfig and an output directory and writes
CSV files there:

  run_localization_sweep   localize_summary.csv, localize_trials.csv
  run_tracking_experiment  track.csv, track_summary.csv, track_cdf.csv
  run_peb_map              peb_map.csv (and fim_eta.csv on request)
  calibrate_noise          calibration.csv

Trial i draws from seed trial_seed(base_seed, i); the same trial seeds are
reused at every sweep point. Trials fan out over a process pool and are
reduced in trial order, so outputs do not depend on the worker count.
A trial counts as failed when it yields no estimate or the localizer
rejects its estimate; the error statistics cover the other trials.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from . import reports
from .channel_sim import OfdmParams, RxFrameSet, Scenario, ris_path, simulate_frames
from .config import RunConfig, TrackingPath, apply_sweep
from .crlb import fisher_beta, fisher_eta, peb, peb_heatmap
from .errors import (
    DegenerateGeometryError,
    EstimationError,
    NondifferentiableError,
    NumericalError,
    SingularMatrixError,
)
from .estimator import measure_all, measure_ris
from .geometry import SPEED_OF_LIGHT, Point2, RisPose, path_length
from .localizer import LocalizationResult, localize, localize_toa_only
from .phase_codebook import PhaseSchedule
from .tracker import EkfConfig, EkfState, default_measurement_noise, track

logger = logging.getLogger(__name__)

MASK64 = (1 << 64) - 1
TRIAL_FAILURES = (EstimationError, DegenerateGeometryError, NondifferentiableError)

SUMMARY_FIELDS = [
    "sweep",
    "value",
    "trials",
    "failed",
    "failed_toa",
    "power_dbm",
    "mean_err",
    "median_err",
    "rmse",
    "mean_err_toa",
    "median_err_toa",
    "rmse_toa",
    "peb_m",
]
TRIAL_FIELDS = [
    "value",
    "trial",
    "seed",
    "k",
    "x_true",
    "y_true",
    "x_hat",
    "y_hat",
    "err",
    "x_toa",
    "y_toa",
    "err_toa",
    "converged",
    "rejected",
    "rejected_toa",
    "note",
]
TRACK_FIELDS = [
    "path",
    "step",
    "t",
    "x_true",
    "y_true",
    "vx_true",
    "vy_true",
    "x_hat",
    "y_hat",
    "vx_hat",
    "vy_hat",
    "err_track",
    "x_reloc",
    "y_reloc",
    "err_reloc",
    "innovation_norm",
    "measured",
]
TRACK_SUMMARY_FIELDS = [
    "path",
    "steps",
    "mean_err_track",
    "mean_err_reloc",
    "first_quarter_err_track",
    "last_quarter_err_track",
    "final_err_track",
    "skipped_updates",
]
CDF_FIELDS = ["path", "method", "error", "cdf"]
PEB_FIELDS = ["x", "y", "peb_m", "peb_db", "note"]
CALIBRATION_FIELDS = [
    "receiver",
    "trials",
    "failed",
    "xi_bias",
    "xi_var",
    "xi_mse",
    "alpha_bias",
    "alpha_var",
    "alpha_mse",
    "xi_crlb",
    "alpha_crlb",
]


def mix_seed(i: int) -> int:
    """SplitMix64 finalizer of i."""
    z = (int(i) + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def trial_seed(base_seed: int, i: int) -> int:
    return (int(base_seed) ^ mix_seed(i)) & MASK64


def _map_ordered(fn: Callable[[Any], Any], items: Sequence[Any], workers: int) -> List[Any]:
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def _nanmean(values: Sequence[float]) -> float:
    arr = np.asarray(values, dtype=float)
    arr = arr[np.isfinite(arr)]
    return float(np.mean(arr)) if arr.size else float("nan")


def _nanmedian(values: Sequence[float]) -> float:
    arr = np.asarray(values, dtype=float)
    arr = arr[np.isfinite(arr)]
    return float(np.median(arr)) if arr.size else float("nan")


def _rmse(values: Sequence[float]) -> float:
    arr = np.asarray(values, dtype=float)
    arr = arr[np.isfinite(arr)]
    return float(np.sqrt(np.mean(arr**2))) if arr.size else float("nan")


def random_ris_pose(rng: np.random.Generator, cfg: RunConfig, anchors: Sequence[Point2],
                    template: RisPose) -> RisPose:
    """A static RIS uniform in the map region, min_anchor_distance away from every anchor."""
    s = cfg["scenario"]
    lo = np.array([s["map_x"][0], s["map_y"][0]], dtype=float)
    hi = np.array([s["map_x"][1], s["map_y"][1]], dtype=float)
    min_dist = float(s["min_anchor_distance"])
    for _ in range(10000):
        p = Point2.of(rng.uniform(lo, hi))
        if all(p.distance_to(a) >= min_dist for a in anchors):
            return replace(template, position=p, velocity=(0.0, 0.0), acceleration=(0.0, 0.0), psi_per_rx=None)
    raise DegenerateGeometryError("no admissible position for a random RIS in the map region")


def _trial_setup(cfg: RunConfig, seed: int) -> Tuple[Scenario, PhaseSchedule, np.random.Generator]:
    rng = np.random.default_rng(seed)
    base = cfg.scenario()
    anchors = base.anchors.points()
    extra = [random_ris_pose(rng, cfg, anchors, base.ris[0]) for _ in range(int(cfg["scenario"]["random_ris"]))]
    scenario = replace(base, ris=base.ris + tuple(extra))
    return scenario, cfg.schedule(len(scenario.ris)), rng


def trial_frames(cfg: RunConfig, seed: int) -> Tuple[Scenario, PhaseSchedule, RxFrameSet]:
    """Scenario, schedule and received frames of one localization trial."""
    scenario, sched, rng = _trial_setup(cfg, seed)
    frames = simulate_frames(scenario, cfg.ofdm(), sched, rng)
    return scenario, sched, frames


def _psi_list(ris: RisPose, n_rx: int) -> List[float]:
    return [ris.psi_for(r) for r in range(n_rx)]


def _error(result: Optional[LocalizationResult], truth: Point2) -> float:
    return float("nan") if result is None else result.p_hat.distance_to(truth)


def _rejection(result: Optional[LocalizationResult]) -> str:
    return "no estimate" if result is None else result.rejected


def _localization_trial(job: Tuple[RunConfig, float, int, int]) -> List[Dict[str, Any]]:
    cfg, value, trial, seed = job
    ofdm, solver = cfg.ofdm(), cfg.solver()
    scenario, sched, frames = trial_frames(cfg, seed)
    anchors = scenario.anchors
    rows = []
    try:
        meas = measure_all(frames, sched, ofdm, cfg.estimator(), [r.spacing_divisor for r in scenario.ris])
    except TRIAL_FAILURES as exc:
        logger.warning("trial %d at %s: measurement failed (%s)", trial, value, exc)
        meas = None
    for k, ris in enumerate(scenario.ris):
        prop: Optional[LocalizationResult] = None
        toa: Optional[LocalizationResult] = None
        note = ""
        if meas is None:
            note = "measurement failed"
        else:
            try:
                prop = localize(meas.for_ris(k), anchors, _psi_list(ris, anchors.n_receivers), solver)
                toa = localize_toa_only(meas.for_ris(k), anchors, solver)
            except TRIAL_FAILURES as exc:
                note = str(exc)
                logger.warning("trial %d, RIS %d at %s: %s", trial, k, value, exc)
        rows.append(
            {
                "value": value,
                "trial": trial,
                "seed": seed,
                "k": k,
                "x_true": ris.position.x,
                "y_true": ris.position.y,
                "x_hat": None if prop is None else prop.p_hat.x,
                "y_hat": None if prop is None else prop.p_hat.y,
                "err": _error(prop, ris.position),
                "x_toa": None if toa is None else toa.p_hat.x,
                "y_toa": None if toa is None else toa.p_hat.y,
                "err_toa": _error(toa, ris.position),
                "converged": None if prop is None else prop.converged,
                "rejected": _rejection(prop),
                "rejected_toa": _rejection(toa),
                "note": note or (toa.message if toa is not None and not toa.converged else ""),
            }
        )
    logger.debug("trial %d at %s: %d RIS rows", trial, value, len(rows))
    return rows


def single_ris_peb(cfg: RunConfig, k: int = 0) -> Optional[float]:
    """PEB of configured RIS k alone, or None when its FIM cannot be inverted."""
    base = cfg.scenario()
    scenario = replace(base, ris=(base.ris[k],))
    try:
        return peb(scenario, cfg.schedule(1), cfg.ofdm(), 0)
    except (NumericalError, ValueError) as exc:
        logger.warning("PEB unavailable: %s", exc)
        return None


@dataclass
class SweepResult:
    summary: List[Dict[str, Any]]
    trials: List[Dict[str, Any]]
    files: List[str] = field(default_factory=list)


def run_localization_sweep(cfg: RunConfig, out_dir: str, *, dump_frames: bool = False) -> SweepResult:
    """Mean localization error of the proposed method and the ToA-only baseline per sweep value."""
    exp = cfg["experiment"]
    variable, values = exp["sweep"], list(exp["values"])
    trials, base_seed, workers = int(exp["trials"]), int(exp["seed"]), int(exp["workers"])
    seeds = [trial_seed(base_seed, i) for i in range(trials)]
    files = [reports.write_schedule(out_dir, cfg.schedule())]

    summary: List[Dict[str, Any]] = []
    all_rows: List[Dict[str, Any]] = []
    for v_index, value in enumerate(values):
        point = apply_sweep(cfg, variable, value)
        logger.info("%s = %s: %d trials", variable, value, trials)
        if dump_frames and v_index == 0:
            _, _, frames = trial_frames(point, seeds[0])
            path = os.path.join(out_dir, "frames.bin")
            reports.dump_frames(path, frames, point.ofdm())
            files.append(path)
        jobs = [(point, value, i, seeds[i]) for i in range(trials)]
        rows = [row for trial_rows in _map_ordered(_localization_trial, jobs, workers) for row in trial_rows]
        all_rows.extend(rows)

        fixed = [r for r in rows if r["k"] == 0]
        if not any(math.isfinite(r["err"]) for r in fixed):
            raise EstimationError(f"every trial failed at {variable} = {value}")
        errs = [r["err"] for r in fixed if not r["rejected"]]
        errs_toa = [r["err_toa"] for r in fixed if not r["rejected_toa"]]
        summary.append(
            {
                "sweep": variable,
                "value": value,
                "trials": trials,
                "failed": len(fixed) - len(errs),
                "failed_toa": len(fixed) - len(errs_toa),
                "power_dbm": point.ofdm().power_dbm,
                "mean_err": _nanmean(errs),
                "median_err": _nanmedian(errs),
                "rmse": _rmse(errs),
                "mean_err_toa": _nanmean(errs_toa),
                "median_err_toa": _nanmedian(errs_toa),
                "rmse_toa": _rmse(errs_toa),
                "peb_m": single_ris_peb(point),
            }
        )

    out_summary = os.path.join(out_dir, "localize_summary.csv")
    out_trials = os.path.join(out_dir, "localize_trials.csv")
    reports.write_csv(out_summary, summary, SUMMARY_FIELDS, config_hash=cfg.hash)
    reports.write_csv(out_trials, all_rows, TRIAL_FIELDS, config_hash=cfg.hash)
    files += [out_summary, out_trials]
    return SweepResult(summary, all_rows, files)


@dataclass
class CalibrationResult:
    rows: List[Dict[str, Any]]

    @property
    def xi_mse(self) -> np.ndarray:
        return np.array([r["xi_mse"] for r in self.rows], dtype=float)

    @property
    def alpha_mse(self) -> np.ndarray:
        return np.array([r["alpha_mse"] for r in self.rows], dtype=float)


def _calibration_trial(job: Tuple[Scenario, PhaseSchedule, OfdmParams, Any, int, int]) -> Optional[np.ndarray]:
    scenario, sched, ofdm, est_cfg, k, seed = job
    frames = simulate_frames(scenario, ofdm, sched, np.random.default_rng(seed))
    try:
        meas = measure_ris(frames, sched, ofdm, k, est_cfg, scenario.ris[k].spacing_divisor)
    except TRIAL_FAILURES:
        return None
    return np.array([[m.xi_hat, m.alpha_hat] for m in meas])


def crlb_xi_alpha(scenario: Scenario, sched: PhaseSchedule, ofdm: OfdmParams,
                  k: int) -> Tuple[np.ndarray, np.ndarray]:
    """Per-receiver c^2 CRLB(tau) and CRLB(alpha) of RIS k."""
    info = fisher_beta(scenario, sched, ofdm)
    n_rx = scenario.n_receivers
    xi = np.array([SPEED_OF_LIGHT**2 * info.crlb(f"tau[{k},{r}]") for r in range(n_rx)])
    alpha = np.array([info.crlb(f"alpha[{k},{r}]") for r in range(n_rx)])
    return xi, alpha


def calibrate_noise(cfg: RunConfig, out_dir: Optional[str] = None, *, scenario: Optional[Scenario] = None,
                    k: int = 0, trials: Optional[int] = None) -> CalibrationResult:
    """Zero-motion Monte Carlo error statistics of xi_hat and alpha_hat per receiver.

    Defaults to the configured scenario (configured RISs only, velocities
    zeroed). Writes calibration.csv when out_dir is given.
    """
    if scenario is None:
        scenario = cfg.scenario()
    scenario = replace(scenario, ris=tuple(replace(r, velocity=(0.0, 0.0)) for r in scenario.ris))
    ofdm, est_cfg = cfg.ofdm(), cfg.estimator()
    sched = cfg.schedule(len(scenario.ris))
    n = int(trials if trials is not None else cfg["calibration"]["trials"])
    base_seed = int(cfg["experiment"]["seed"])
    jobs = [(scenario, sched, ofdm, est_cfg, k, trial_seed(base_seed, i)) for i in range(n)]
    results = _map_ordered(_calibration_trial, jobs, int(cfg["experiment"]["workers"]))
    ok = [r for r in results if r is not None]
    if not ok:
        raise EstimationError("every calibration trial failed")

    ris = scenario.ris[k]
    truth = np.array(
        [
            [path_length(scenario.tx, p_r, ris.position), ris_path(scenario, ofdm, k, r).alpha]
            for r, p_r in enumerate(scenario.receivers)
        ]
    )
    errors = np.stack(ok) - truth[None, :, :]
    try:
        xi_crlb, alpha_crlb = crlb_xi_alpha(scenario, sched, ofdm, k)
    except SingularMatrixError as exc:
        logger.warning("CRLB unavailable for calibration: %s", exc)
        xi_crlb = alpha_crlb = np.full(scenario.n_receivers, np.nan)

    rows = []
    for r in range(scenario.n_receivers):
        e_xi, e_alpha = errors[:, r, 0], errors[:, r, 1]
        rows.append(
            {
                "receiver": r,
                "trials": n,
                "failed": n - len(ok),
                "xi_bias": float(np.mean(e_xi)),
                "xi_var": float(np.var(e_xi)),
                "xi_mse": float(np.mean(e_xi**2)),
                "alpha_bias": float(np.mean(e_alpha)),
                "alpha_var": float(np.var(e_alpha)),
                "alpha_mse": float(np.mean(e_alpha**2)),
                "xi_crlb": float(xi_crlb[r]),
                "alpha_crlb": float(alpha_crlb[r]),
            }
        )
    if out_dir is not None:
        reports.write_csv(os.path.join(out_dir, "calibration.csv"), rows, CALIBRATION_FIELDS, config_hash=cfg.hash)
    return CalibrationResult(rows)


def _path_scenario(cfg: RunConfig, path: TrackingPath, t: float, k: int) -> Scenario:
    base = cfg.scenario()
    position, velocity = path.state_at(t)
    moving = replace(base.ris[k], position=position, velocity=velocity, acceleration=path.acceleration)
    ris = list(base.ris)
    ris[k] = moving
    return replace(base, ris=tuple(ris))


def measurement_noise(cfg: RunConfig, scenario: Scenario, k: int) -> np.ndarray:
    """C for RIS k: quantization model, or per-receiver CRLBs at the given scenario."""
    t = cfg["tracking"]
    ofdm = cfg.ofdm()
    n_rx = scenario.n_receivers
    if t["noise_mode"] == "crlb":
        xi, alpha = crlb_xi_alpha(scenario, cfg.schedule(len(scenario.ris)), ofdm, k)
        return np.diag(np.concatenate([xi, alpha]))
    if "alpha_var" in t:
        alpha_var: Any = float(t["alpha_var"])
    else:
        calib = calibrate_noise(cfg, scenario=scenario, k=k)
        alpha_var = np.maximum(calib.alpha_mse, 1e-12)
    C = default_measurement_noise(n_rx, ofdm.delta_f, cfg.estimator(), alpha_var)
    C[:n_rx, :n_rx] *= float(t["quantization_scale"]) ** 2
    return C


def _frames_stream(cfg: RunConfig, path: TrackingPath, sched: PhaseSchedule, k: int,
                   rng: np.random.Generator) -> Iterator[RxFrameSet]:
    ofdm = cfg.ofdm()
    ts = float(cfg["tracking"]["sample_period"])
    for n in range(1, path.steps + 1):
        yield simulate_frames(_path_scenario(cfg, path, n * ts, k), ofdm, sched, rng)


def _initial_state(cfg: RunConfig, path: TrackingPath, first: Optional[LocalizationResult],
                   rng: np.random.Generator) -> EkfState:
    t = cfg["tracking"]
    velocity_var = float(t["velocity_var"])
    if "init_sigma" in t or t["init"] == "truth":
        sigma = float(t.get("init_sigma", 0.0))
        p = np.array([path.position.x, path.position.y]) + sigma * rng.standard_normal(2)
        var = max(sigma**2, 1e-4)
        return EkfState(np.array([p[0], p[1], 0.0, 0.0]), np.diag([var, var, velocity_var, velocity_var]))
    if first is None:
        raise EstimationError(f"{path.name}: initial localization failed")
    return EkfState.from_localization(first, position_var=float(t["position_var"]), velocity_var=velocity_var)


def _quarter_means(errs: Sequence[float]) -> Tuple[float, float]:
    q = max(1, len(errs) // 4)
    return _nanmean(errs[:q]), _nanmean(errs[-q:])


def empirical_cdf(errors: Sequence[float]) -> List[Tuple[float, float]]:
    arr = np.sort(np.asarray([e for e in errors if math.isfinite(e)], dtype=float))
    return [(float(e), (i + 1) / arr.size) for i, e in enumerate(arr)]


@dataclass
class TrackingResult:
    rows: List[Dict[str, Any]]
    summary: List[Dict[str, Any]]
    files: List[str] = field(default_factory=list)


def _track_path(cfg: RunConfig, index: int, path: TrackingPath) -> List[Dict[str, Any]]:
    t = cfg["tracking"]
    k = int(t["ris"])
    ts = float(t["sample_period"])
    ofdm, est_cfg, solver = cfg.ofdm(), cfg.estimator(), cfg.solver()
    rng = np.random.default_rng(trial_seed(int(cfg["experiment"]["seed"]), index))

    scenario0 = _path_scenario(cfg, path, 0.0, k)
    sched = cfg.schedule(len(scenario0.ris))
    anchors = scenario0.anchors
    ris0 = scenario0.ris[k]
    psi = _psi_list(ris0, anchors.n_receivers)
    C = measurement_noise(cfg, scenario0, k)
    ekf = EkfConfig(
        sample_period=ts,
        acceleration=path.acceleration,
        process_noise=np.diag(np.asarray(t["process_noise"], dtype=float)),
        measurement_noise=C,
        velocity_coupling=bool(t["velocity_coupling"]),
    )

    first: Optional[LocalizationResult] = None
    frames0 = simulate_frames(scenario0, ofdm, sched, rng)
    try:
        first = localize(measure_ris(frames0, sched, ofdm, k, est_cfg, ris0.spacing_divisor), anchors, psi, solver)
    except TRIAL_FAILURES as exc:
        logger.warning("%s: initial localization failed (%s)", path.name, exc)
    init = _initial_state(cfg, path, first, rng)

    steps = track(_frames_stream(cfg, path, sched, k, rng), sched, ofdm, anchors, psi, ekf, init, k=k,
                  est_cfg=est_cfg, spacing_divisor=ris0.spacing_divisor)
    rows = []
    for step in steps:
        time = step.step * ts
        truth, vel = path.state_at(time)
        if step.step == 0:
            reloc = first
        elif step.measurements is not None:
            try:
                reloc = localize(step.measurements, anchors, psi, solver)
            except TRIAL_FAILURES:
                reloc = None
        else:
            reloc = None
        x = step.state.x
        rows.append(
            {
                "path": path.name,
                "step": step.step,
                "t": time,
                "x_true": truth.x,
                "y_true": truth.y,
                "vx_true": vel[0],
                "vy_true": vel[1],
                "x_hat": x[0],
                "y_hat": x[1],
                "vx_hat": x[2],
                "vy_hat": x[3],
                "err_track": float(math.hypot(x[0] - truth.x, x[1] - truth.y)),
                "x_reloc": None if reloc is None else reloc.p_hat.x,
                "y_reloc": None if reloc is None else reloc.p_hat.y,
                "err_reloc": _error(reloc, truth),
                "innovation_norm": step.innovation_norm if step.step else None,
                "measured": step.measured,
            }
        )
    return rows


def run_tracking_experiment(cfg: RunConfig, out_dir: str) -> TrackingResult:
    """EKF tracking of the configured RIS along every [[tracking.paths]] entry."""
    paths = cfg.tracking_paths()
    if not paths:
        raise EstimationError("no tracking paths configured")
    files = [reports.write_schedule(out_dir, cfg.schedule(len(cfg["scenario"]["ris"])))]
    rows: List[Dict[str, Any]] = []
    summary: List[Dict[str, Any]] = []
    cdf_rows: List[Dict[str, Any]] = []
    pooled: Dict[str, List[float]] = {"track": [], "reloc": []}
    for index, path in enumerate(paths):
        logger.info("tracking %s over %d steps", path.name, path.steps)
        path_rows = _track_path(cfg, index, path)
        rows.extend(path_rows)
        moving = [r for r in path_rows if r["step"] > 0]
        err_track = [r["err_track"] for r in moving]
        err_reloc = [r["err_reloc"] for r in moving]
        first_q, last_q = _quarter_means(err_track)
        summary.append(
            {
                "path": path.name,
                "steps": path.steps,
                "mean_err_track": _nanmean(err_track),
                "mean_err_reloc": _nanmean(err_reloc),
                "first_quarter_err_track": first_q,
                "last_quarter_err_track": last_q,
                "final_err_track": err_track[-1],
                "skipped_updates": sum(1 for r in moving if not r["measured"]),
            }
        )
        for method, errs in (("track", err_track), ("reloc", err_reloc)):
            pooled[method].extend(errs)
            cdf_rows += [{"path": path.name, "method": method, "error": e, "cdf": c} for e, c in empirical_cdf(errs)]
    for method, errs in pooled.items():
        cdf_rows += [{"path": "all", "method": method, "error": e, "cdf": c} for e, c in empirical_cdf(errs)]

    for name, data, fields in (
        ("track.csv", rows, TRACK_FIELDS),
        ("track_summary.csv", summary, TRACK_SUMMARY_FIELDS),
        ("track_cdf.csv", cdf_rows, CDF_FIELDS),
    ):
        out = os.path.join(out_dir, name)
        reports.write_csv(out, data, fields, config_hash=cfg.hash)
        files.append(out)
    return TrackingResult(rows, summary, files)


@dataclass
class PebMapResult:
    rows: List[Dict[str, Any]]
    missing: int
    files: List[str] = field(default_factory=list)


def run_peb_map(cfg: RunConfig, out_dir: str, *, dump_fim: bool = False) -> PebMapResult:
    """PEB of the selected configured RIS over the map region."""
    s, pm = cfg["scenario"], cfg["peb_map"]
    template = cfg.scenario()
    k = int(pm["ris"])
    if k >= len(template.ris):
        raise EstimationError(f"peb_map.ris = {k} but only {len(template.ris)} RISs are configured")
    sched = cfg.schedule(len(template.ris))
    ofdm = cfg.ofdm()
    files = [reports.write_schedule(out_dir, sched)]
    cells = peb_heatmap(
        s["map_x"],
        s["map_y"],
        float(pm["step"]),
        template,
        sched,
        ofdm,
        k=k,
        exclusion_radius=float(pm["exclusion_radius"]),
        workers=int(cfg["experiment"]["workers"]),
    )
    rows = [{"x": c.x, "y": c.y, "peb_m": c.peb, "peb_db": c.peb_db, "note": c.note} for c in cells]
    missing = sum(1 for c in cells if c.peb is None)
    if missing == len(cells):
        raise SingularMatrixError("PEB could not be evaluated at any grid cell")
    out = os.path.join(out_dir, "peb_map.csv")
    reports.write_csv(out, rows, PEB_FIELDS, config_hash=cfg.hash)
    files.append(out)

    if dump_fim:
        single = replace(template, ris=(template.ris[k],))
        info = fisher_eta(single, cfg.schedule(1), ofdm)
        out_fim = os.path.join(out_dir, "fim_eta.csv")
        reports.write_csv(out_fim, reports.fim_rows(info.matrix, info.param_layout),
                          ["param"] + list(info.param_layout), config_hash=cfg.hash)
        files.append(out_fim)
    return PebMapResult(rows, missing, files)
