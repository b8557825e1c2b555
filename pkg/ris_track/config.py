"""Run configuration: built-in defaults, a TOML file, then command-line overrides.

Sections: [ofdm], [estimator], [scenario] (with [[scenario.ris]] and
[[scenario.scatterers]]), [localizer], [tracking] (with [[tracking.paths]]),
[peb_map], [calibration], [experiment]. configs/default.toml documents every
key. The resolved configuration is hashed (SHA-256 of sorted-key JSON) and the
hash is written into every output file.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import os
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import toml

from .channel_sim import OfdmParams, Scatterer, Scenario
from .errors import ConfigError
from .estimator import EstimatorConfig
from .geometry import Point2, RisPose
from .localizer import SolverConfig
from .phase_codebook import PhaseSchedule, build_schedule

# Generic env vars
ENV_CONFIG = "RIS_TRACK_CONFIG"
ENV_WORKERS = "RIS_TRACK_WORKERS"
ENV_LOG_LEVEL = "RIS_TRACK_LOG_LEVEL"

SWEEP_VARIABLES = (
    "delta_f",
    "n_subcarriers",
    "power_dbm",
    "n_rx",
    "N_T",
    "T",
    "ris_x",
    "ris_y",
    "delta_f_fixed_bw",
    "n_subcarriers_fixed_bw",
)
NOISE_MODES = ("quantization", "crlb")
INIT_MODES = ("localize", "truth")

RIS_DEFAULTS: Dict[str, Any] = {
    "position": [7.0, 7.0],
    "psi": math.pi / 6,
    "velocity": [0.0, 0.0],
    "acceleration": [0.0, 0.0],
    "num_elements": 4,
    "spacing_divisor": 4,
}
SCATTERER_DEFAULTS: Dict[str, Any] = {"position": [4.0, 10.0], "reflection_gain": 0.3}
PATH_DEFAULTS: Dict[str, Any] = {
    "name": "path",
    "position": [3.0, 5.0],
    "velocity": [10.0, 0.0],
    "acceleration": [0.0, 2.0],
    "steps": 20,
}

DEFAULTS: Dict[str, Any] = {
    "ofdm": {
        "n_subcarriers": 512,
        "delta_f": 120e3,
        "f_c": 6e9,
        "power_dbm": 30.0,
        "n0_dbm_hz": -174.0,
        "cp_fraction": 0.25,
        "T": 16,
        "n_intervals": 8,
        # 0 means T / 2
        "k_max": 0,
    },
    "estimator": {
        "n_fft_tau": 8192,
        "n_fft_doppler": 1024,
        "candidate_rows": 8,
        "refine_delay": True,
    },
    "scenario": {
        "tx": [0.0, 0.0],
        "rx": [[12.0, 0.0], [14.0, 0.0], [16.0, 0.0]],
        "ris_gain_db": 0.0,
        "direct_path": True,
        "ris": [dict(RIS_DEFAULTS)],
        "scatterers": [
            {"position": [4.0, 10.0], "reflection_gain": 0.3},
            {"position": [10.0, 12.0], "reflection_gain": 0.3},
            {"position": [13.0, 3.0], "reflection_gain": 0.3},
        ],
        "random_ris": 1,
        "min_anchor_distance": 0.5,
        "map_x": [0.0, 16.0],
        "map_y": [1.0, 14.0],
    },
    "localizer": {
        "grid_step": 0.25,
        "refine_max_iters": 400,
        "refine_tol": 1e-4,
        "restarts": 3,
        "weights": [1.0, 1.0],
        "gate_pvalue": 1e-6,
    },
    "tracking": {
        "sample_period": 0.05,
        "process_noise": [0.01, 0.01, 0.1, 0.1],
        "noise_mode": "quantization",
        "quantization_scale": 1.0,
        "init": "localize",
        "position_var": 1.0,
        "velocity_var": 100.0,
        "velocity_coupling": True,
        "ris": 0,
        "paths": [
            {"name": "path1", "position": [3.0, 5.0], "velocity": [10.0, 0.0], "acceleration": [0.0, 2.0],
             "steps": 20},
            {"name": "path2", "position": [12.0, 3.0], "velocity": [0.0, 10.0], "acceleration": [-2.0, 0.0],
             "steps": 20},
            {"name": "path3", "position": [2.0, 3.0], "velocity": [16.0, 12.0], "acceleration": [-1.6, -1.2],
             "steps": 12},
            {"name": "path4", "position": [14.0, 12.0], "velocity": [-12.0, -16.0], "acceleration": [1.2, 1.6],
             "steps": 12},
        ],
    },
    "peb_map": {
        "step": 0.5,
        "exclusion_radius": 0.25,
        "ris": 0,
    },
    "calibration": {
        "trials": 200,
    },
    "experiment": {
        "sweep": "delta_f",
        "values": [30e3, 60e3, 120e3, 240e3],
        "trials": 100,
        "seed": 0,
        "out": "results",
        "workers": 1,
    },
}

# Keys that are valid but have no default (absent means "derive it").
OPTIONAL_KEYS: Dict[str, Tuple[str, ...]] = {
    "tracking": ("alpha_var", "init_sigma"),
    "scenario": (),
}
ARRAY_DEFAULTS = {
    ("scenario", "ris"): RIS_DEFAULTS,
    ("scenario", "scatterers"): SCATTERER_DEFAULTS,
    ("tracking", "paths"): PATH_DEFAULTS,
}
ARRAY_OPTIONAL = {("scenario", "ris"): ("psi_per_rx",)}


def _merge_array(section: str, key: str, entries: Any) -> List[Dict[str, Any]]:
    field = f"{section}.{key}"
    if not isinstance(entries, list):
        raise ConfigError("expected an array of tables", field=field)
    base = ARRAY_DEFAULTS[(section, key)]
    allowed = set(base) | set(ARRAY_OPTIONAL.get((section, key), ()))
    out = []
    for i, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise ConfigError("expected a table", field=f"{field}[{i}]")
        unknown = sorted(set(entry) - allowed)
        if unknown:
            raise ConfigError(f"unknown key(s) {', '.join(unknown)}", field=f"{field}[{i}]")
        merged = copy.deepcopy(base)
        merged.update(copy.deepcopy(entry))
        out.append(merged)
    return out


def merge_config(base: Mapping[str, Any], update: Mapping[str, Any]) -> Dict[str, Any]:
    """base with update laid over it; unknown sections and keys are rejected."""
    result = copy.deepcopy(dict(base))
    for section, values in update.items():
        if section not in DEFAULTS:
            raise ConfigError(f"unknown section [{section}]", field=section)
        if not isinstance(values, dict):
            raise ConfigError("expected a table", field=section)
        allowed = set(DEFAULTS[section]) | set(OPTIONAL_KEYS.get(section, ()))
        for key, value in values.items():
            if key not in allowed:
                raise ConfigError("unknown key", field=f"{section}.{key}")
            if (section, key) in ARRAY_DEFAULTS:
                result[section][key] = _merge_array(section, key, value)
            else:
                result[section][key] = copy.deepcopy(value)
    return result


def parse_value(text: str) -> Any:
    """A TOML scalar or array literal; anything else is taken as a bare string."""
    try:
        return toml.loads(f"v = {text}")["v"]
    except toml.TomlDecodeError:
        return text


def parse_overrides(items: Sequence[str]) -> Dict[str, Dict[str, Any]]:
    """`section.key=value` strings to a nested update."""
    out: Dict[str, Dict[str, Any]] = {}
    for item in items:
        name, sep, value = item.partition("=")
        section, dot, key = name.strip().partition(".")
        if not sep or not dot or not key:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        out.setdefault(section, {})[key] = parse_value(value.strip())
    return out


def read_config_file(path: str) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return toml.load(f)
    except toml.TomlDecodeError as exc:
        raise ConfigError(f"{path}: {exc.msg}", line=exc.lineno, column=exc.colno) from exc
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror or exc}") from exc


def _point(value: Any, field: str) -> Point2:
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError("expected two numbers", field=field) from exc
    if arr.shape != (2,) or not np.all(np.isfinite(arr)):
        raise ConfigError("expected two finite numbers", field=field)
    return Point2(float(arr[0]), float(arr[1]))


def _number(value: Any, field: str, *, minimum: Optional[float] = None, exclusive: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"expected a number, got {value!r}", field=field)
    v = float(value)
    if not math.isfinite(v):
        raise ConfigError("must be finite", field=field)
    if minimum is not None and (v < minimum or (exclusive and v == minimum)):
        op = ">" if exclusive else ">="
        raise ConfigError(f"must be {op} {minimum}, got {value}", field=field)
    return v


def _integer(value: Any, field: str, *, minimum: int = 0) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        else:
            raise ConfigError(f"expected an integer, got {value!r}", field=field)
    if value < minimum:
        raise ConfigError(f"must be >= {minimum}, got {value}", field=field)
    return int(value)


def _choice(value: Any, field: str, choices: Sequence[str]) -> str:
    if value not in choices:
        raise ConfigError(f"must be one of {', '.join(choices)}, got {value!r}", field=field)
    return str(value)


def _interval(value: Any, field: str) -> Tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ConfigError("expected [low, high]", field=field)
    lo, hi = (_number(v, field) for v in value)
    if hi <= lo:
        raise ConfigError(f"empty interval [{lo}, {hi}]", field=field)
    return lo, hi


def validate(data: Mapping[str, Any]) -> None:
    """Raise ConfigError naming the first invalid field."""
    o = data["ofdm"]
    _integer(o["n_subcarriers"], "ofdm.n_subcarriers", minimum=1)
    _number(o["delta_f"], "ofdm.delta_f", minimum=0.0, exclusive=True)
    _number(o["f_c"], "ofdm.f_c", minimum=0.0, exclusive=True)
    _number(o["power_dbm"], "ofdm.power_dbm")
    _number(o["n0_dbm_hz"], "ofdm.n0_dbm_hz")
    _number(o["cp_fraction"], "ofdm.cp_fraction", minimum=0.0)
    _integer(o["T"], "ofdm.T", minimum=2)
    _integer(o["n_intervals"], "ofdm.n_intervals", minimum=2)
    _integer(o["k_max"], "ofdm.k_max")

    e = data["estimator"]
    _integer(e["n_fft_tau"], "estimator.n_fft_tau", minimum=1)
    _integer(e["n_fft_doppler"], "estimator.n_fft_doppler", minimum=1)
    _integer(e["candidate_rows"], "estimator.candidate_rows")
    if not isinstance(e["refine_delay"], bool):
        raise ConfigError("expected true or false", field="estimator.refine_delay")

    s = data["scenario"]
    _point(s["tx"], "scenario.tx")
    if not isinstance(s["rx"], list) or not s["rx"]:
        raise ConfigError("at least one receiver is required", field="scenario.rx")
    for i, p in enumerate(s["rx"]):
        _point(p, f"scenario.rx[{i}]")
    _number(s["ris_gain_db"], "scenario.ris_gain_db")
    _integer(s["random_ris"], "scenario.random_ris")
    _number(s["min_anchor_distance"], "scenario.min_anchor_distance", minimum=0.0)
    _interval(s["map_x"], "scenario.map_x")
    _interval(s["map_y"], "scenario.map_y")
    if not s["ris"]:
        raise ConfigError("at least one RIS is required", field="scenario.ris")
    elements = set()
    for i, r in enumerate(s["ris"]):
        f = f"scenario.ris[{i}]"
        _point(r["position"], f"{f}.position")
        _point(r["velocity"], f"{f}.velocity")
        _point(r["acceleration"], f"{f}.acceleration")
        _number(r["psi"], f"{f}.psi")
        elements.add(_integer(r["num_elements"], f"{f}.num_elements", minimum=2))
        _integer(r["spacing_divisor"], f"{f}.spacing_divisor", minimum=4)
        if "psi_per_rx" in r and len(r["psi_per_rx"]) != len(s["rx"]):
            raise ConfigError(f"needs one value per receiver ({len(s['rx'])})", field=f"{f}.psi_per_rx")
    if len(elements) > 1:
        raise ConfigError("all RISs must have the same num_elements", field="scenario.ris")
    for i, sc in enumerate(s["scatterers"]):
        _point(sc["position"], f"scenario.scatterers[{i}].position")
        _number(sc["reflection_gain"], f"scenario.scatterers[{i}].reflection_gain", minimum=0.0)

    loc = data["localizer"]
    _number(loc["grid_step"], "localizer.grid_step", minimum=0.0, exclusive=True)
    _integer(loc["refine_max_iters"], "localizer.refine_max_iters", minimum=1)
    _number(loc["refine_tol"], "localizer.refine_tol", minimum=0.0, exclusive=True)
    _integer(loc["restarts"], "localizer.restarts", minimum=1)
    if not isinstance(loc["weights"], list) or len(loc["weights"]) != 2:
        raise ConfigError("expected [w_xi, w_alpha]", field="localizer.weights")
    if sum(_number(w, "localizer.weights", minimum=0.0) for w in loc["weights"]) == 0:
        raise ConfigError("at least one weight must be > 0", field="localizer.weights")
    if _number(loc["gate_pvalue"], "localizer.gate_pvalue", minimum=0.0) >= 1.0:
        raise ConfigError(f"must be < 1, got {loc['gate_pvalue']}", field="localizer.gate_pvalue")

    t = data["tracking"]
    _number(t["sample_period"], "tracking.sample_period", minimum=0.0, exclusive=True)
    if not isinstance(t["process_noise"], list) or len(t["process_noise"]) != 4:
        raise ConfigError("expected four diagonal entries", field="tracking.process_noise")
    for v in t["process_noise"]:
        _number(v, "tracking.process_noise", minimum=0.0)
    _choice(t["noise_mode"], "tracking.noise_mode", NOISE_MODES)
    _choice(t["init"], "tracking.init", INIT_MODES)
    _number(t["quantization_scale"], "tracking.quantization_scale", minimum=0.0)
    _number(t["position_var"], "tracking.position_var", minimum=0.0, exclusive=True)
    _number(t["velocity_var"], "tracking.velocity_var", minimum=0.0, exclusive=True)
    if "alpha_var" in t:
        _number(t["alpha_var"], "tracking.alpha_var", minimum=0.0, exclusive=True)
    if "init_sigma" in t:
        _number(t["init_sigma"], "tracking.init_sigma", minimum=0.0)
    _integer(t["ris"], "tracking.ris")
    for i, p in enumerate(t["paths"]):
        f = f"tracking.paths[{i}]"
        _point(p["position"], f"{f}.position")
        _point(p["velocity"], f"{f}.velocity")
        _point(p["acceleration"], f"{f}.acceleration")
        _integer(p["steps"], f"{f}.steps", minimum=1)

    pm = data["peb_map"]
    _number(pm["step"], "peb_map.step", minimum=0.0, exclusive=True)
    _number(pm["exclusion_radius"], "peb_map.exclusion_radius", minimum=0.0)
    _integer(pm["ris"], "peb_map.ris")
    _integer(data["calibration"]["trials"], "calibration.trials", minimum=1)

    x = data["experiment"]
    _choice(x["sweep"], "experiment.sweep", SWEEP_VARIABLES)
    if not isinstance(x["values"], list) or not x["values"]:
        raise ConfigError("sweep values must be a nonempty array", field="experiment.values")
    for v in x["values"]:
        _number(v, "experiment.values")
    _integer(x["trials"], "experiment.trials", minimum=1)
    _integer(x["seed"], "experiment.seed")
    _integer(x["workers"], "experiment.workers", minimum=1)


# Settings that do not change any result stay out of the hash.
UNHASHED_KEYS = (("experiment", "out"), ("experiment", "workers"))


def config_hash(data: Mapping[str, Any]) -> str:
    hashed = copy.deepcopy(dict(data))
    for section, key in UNHASHED_KEYS:
        hashed.get(section, {}).pop(key, None)
    canonical = json.dumps(hashed, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class TrackingPath:
    name: str
    position: Point2
    velocity: Tuple[float, float]
    acceleration: Tuple[float, float]
    steps: int

    def state_at(self, t: float) -> Tuple[Point2, Tuple[float, float]]:
        """Noise-free constant-acceleration position and velocity after t seconds."""
        p = np.array([self.position.x, self.position.y])
        v = np.asarray(self.velocity, dtype=float)
        a = np.asarray(self.acceleration, dtype=float)
        pos = p + v * t + 0.5 * a * t**2
        vel = v + a * t
        return Point2.of(pos), (float(vel[0]), float(vel[1]))


@dataclass(frozen=True)
class RunConfig:
    """Validated, fully resolved configuration."""

    data: Dict[str, Any]
    source: Optional[str] = None

    def __getitem__(self, section: str) -> Dict[str, Any]:
        return self.data[section]

    @property
    def hash(self) -> str:
        return config_hash(self.data)

    def with_updates(self, update: Mapping[str, Any]) -> "RunConfig":
        data = merge_config(self.data, update)
        validate(data)
        return RunConfig(data, self.source)

    def ofdm(self) -> OfdmParams:
        o = self.data["ofdm"]
        return OfdmParams.from_power(
            power_dbm=float(o["power_dbm"]),
            n0_dbm_hz=float(o["n0_dbm_hz"]),
            n_subcarriers=int(o["n_subcarriers"]),
            delta_f=float(o["delta_f"]),
            f_c=float(o["f_c"]),
            cp_fraction=float(o["cp_fraction"]),
            T=int(o["T"]),
            n_intervals=int(o["n_intervals"]),
        )

    def estimator(self) -> EstimatorConfig:
        e = self.data["estimator"]
        return EstimatorConfig(
            n_fft_tau=int(e["n_fft_tau"]),
            n_fft_doppler=int(e["n_fft_doppler"]),
            candidate_rows=int(e["candidate_rows"]),
            refine_delay=bool(e["refine_delay"]),
        )

    def solver(self) -> SolverConfig:
        loc, s = self.data["localizer"], self.data["scenario"]
        return SolverConfig(
            x_bounds=tuple(float(v) for v in s["map_x"]),
            y_bounds=tuple(float(v) for v in s["map_y"]),
            grid_step=float(loc["grid_step"]),
            refine_max_iters=int(loc["refine_max_iters"]),
            refine_tol=float(loc["refine_tol"]),
            restarts=int(loc["restarts"]),
            weights=(float(loc["weights"][0]), float(loc["weights"][1])),
            gate_pvalue=float(loc["gate_pvalue"]),
        )

    @property
    def n_ris(self) -> int:
        """Configured RISs plus randomly placed ones."""
        s = self.data["scenario"]
        return len(s["ris"]) + int(s["random_ris"])

    @property
    def num_elements(self) -> int:
        return int(self.data["scenario"]["ris"][0]["num_elements"])

    def schedule(self, n_ris: Optional[int] = None) -> PhaseSchedule:
        o = self.data["ofdm"]
        T = int(o["T"])
        k_max = int(o["k_max"]) or T // 2
        return build_schedule(self.n_ris if n_ris is None else n_ris, k_max, self.num_elements, T,
                              int(o["n_intervals"]))

    def ris_poses(self) -> List[RisPose]:
        poses = []
        for i, r in enumerate(self.data["scenario"]["ris"]):
            f = f"scenario.ris[{i}]"
            try:
                poses.append(
                    RisPose(
                        position=_point(r["position"], f"{f}.position"),
                        orientation_psi=float(r["psi"]),
                        velocity=tuple(float(v) for v in r["velocity"]),
                        acceleration=tuple(float(v) for v in r["acceleration"]),
                        num_elements=int(r["num_elements"]),
                        spacing_divisor=int(r["spacing_divisor"]),
                        psi_per_rx=tuple(float(v) for v in r["psi_per_rx"]) if "psi_per_rx" in r else None,
                    )
                )
            except ValueError as exc:
                raise ConfigError(str(exc), field=f) from exc
        return poses

    def scenario(self, extra_ris: Sequence[RisPose] = ()) -> Scenario:
        """Scenario of the configured RISs (plus extra_ris) without random placement."""
        s = self.data["scenario"]
        return Scenario(
            tx=_point(s["tx"], "scenario.tx"),
            receivers=tuple(_point(p, f"scenario.rx[{i}]") for i, p in enumerate(s["rx"])),
            ris=tuple(self.ris_poses()) + tuple(extra_ris),
            scatterers=tuple(
                Scatterer(_point(sc["position"], f"scenario.scatterers[{i}].position"),
                          float(sc["reflection_gain"]))
                for i, sc in enumerate(s["scatterers"])
            ),
            ris_gain_db=float(s["ris_gain_db"]),
            direct_path=bool(s["direct_path"]),
        )

    def tracking_paths(self) -> List[TrackingPath]:
        return [
            TrackingPath(
                name=str(p["name"]),
                position=_point(p["position"], f"tracking.paths[{i}].position"),
                velocity=tuple(float(v) for v in p["velocity"]),
                acceleration=tuple(float(v) for v in p["acceleration"]),
                steps=int(p["steps"]),
            )
            for i, p in enumerate(self.data["tracking"]["paths"])
        ]


def load_config(path: Optional[str] = None, *, overrides: Sequence[Mapping[str, Any]] = (),
                env: Optional[Mapping[str, str]] = None) -> RunConfig:
    """Defaults, then the file (path, else $RIS_TRACK_CONFIG), then each override in order."""
    env = os.environ if env is None else env
    path = path or env.get(ENV_CONFIG) or None
    data = copy.deepcopy(DEFAULTS)
    if path:
        data = merge_config(data, read_config_file(path))
    for update in overrides:
        data = merge_config(data, update)
    validate(data)
    return RunConfig(data, path)


def apply_sweep(cfg: RunConfig, variable: str, value: float) -> RunConfig:
    """Configuration of one sweep point.

    Sweeps of delta_f or n_subcarriers alone keep the energy per subcarrier
    symbol E_s, so the total power follows N * E_s * delta_f. The fixed-bandwidth
    sweeps keep N * delta_f and with it both E_s and the total power.
    """
    o, s = cfg["ofdm"], cfg["scenario"]
    if variable == "delta_f":
        update: Dict[str, Any] = {"ofdm": {"delta_f": float(value),
                                           "power_dbm": _same_symbol_energy(o, o["n_subcarriers"], value)}}
    elif variable == "n_subcarriers":
        n = int(round(value))
        update = {"ofdm": {"n_subcarriers": n, "power_dbm": _same_symbol_energy(o, n, o["delta_f"])}}
    elif variable == "power_dbm":
        update = {"ofdm": {"power_dbm": float(value)}}
    elif variable == "N_T":
        update = {"ofdm": {"n_intervals": int(round(value))}}
    elif variable == "T":
        update = {"ofdm": {"T": int(round(value))}}
    elif variable == "delta_f_fixed_bw":
        bw = o["n_subcarriers"] * o["delta_f"]
        update = {"ofdm": {"delta_f": float(value), "n_subcarriers": max(1, int(round(bw / value)))}}
    elif variable == "n_subcarriers_fixed_bw":
        bw = o["n_subcarriers"] * o["delta_f"]
        n = int(round(value))
        update = {"ofdm": {"n_subcarriers": n, "delta_f": bw / n}}
    elif variable in ("ris_x", "ris_y"):
        ris = copy.deepcopy(s["ris"])
        ris[0]["position"][0 if variable == "ris_x" else 1] = float(value)
        update = {"scenario": {"ris": ris}}
    elif variable == "n_rx":
        update = {"scenario": {"rx": extend_receivers(s["rx"], int(round(value)))}}
    else:
        raise ConfigError(f"unknown sweep variable {variable!r}", field="experiment.sweep")
    return cfg.with_updates(update)


def _same_symbol_energy(ofdm: Mapping[str, Any], n_subcarriers: float, delta_f: float) -> float:
    """power_dbm that keeps E_s when the band becomes n_subcarriers x delta_f."""
    ratio = (n_subcarriers * delta_f) / (ofdm["n_subcarriers"] * ofdm["delta_f"])
    if ratio <= 0:
        raise ConfigError(f"band of {n_subcarriers} x {delta_f} Hz is empty", field="experiment.values")
    return float(ofdm["power_dbm"]) + 10.0 * math.log10(ratio)


def extend_receivers(rx: Sequence[Sequence[float]], n: int) -> List[List[float]]:
    """First n receivers; beyond the list, continue the step between the last two."""
    if n < 1:
        raise ConfigError(f"need at least one receiver, got {n}", field="scenario.rx")
    out = [list(map(float, p)) for p in rx[:n]]
    if len(out) == n:
        return out
    if len(rx) < 2:
        raise ConfigError("extending the receiver list needs at least two receivers", field="scenario.rx")
    step = np.asarray(rx[-1], dtype=float) - np.asarray(rx[-2], dtype=float)
    last = np.asarray(rx[-1], dtype=float)
    while len(out) < n:
        last = last + step
        out.append([float(last[0]), float(last[1])])
    return out
