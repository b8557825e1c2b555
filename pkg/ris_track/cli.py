"""Command-line entry point.

Subcommands:
  localize-sweep   Monte Carlo localization error versus one swept parameter
  track            EKF tracking along the configured paths
  peb-map          position error bound over the map region
  calibrate-noise  per-receiver measurement error statistics

Exit codes: 0 success, 2 configuration, schedule or output-directory error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Any, Dict, List, Optional

from . import __version__, harness, reports
from .config import ENV_LOG_LEVEL, ENV_WORKERS, SWEEP_VARIABLES, RunConfig, load_config, parse_overrides, parse_value
from .errors import ConfigError, NumericalError, ScheduleError

logger = logging.getLogger(__name__)

COMMANDS = ("localize-sweep", "track", "peb-map", "calibrate-noise")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ris-track",
        description="Localization and tracking of RIS-equipped users: Monte Carlo experiments and bounds.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="TOML config file (default: RIS_TRACK_CONFIG).")
    common.add_argument("--seed", type=int, default=None, help="Base seed (experiment.seed).")
    common.add_argument("--out", default=None, help="Output directory (experiment.out).")
    common.add_argument("--trials", type=int, default=None, help="Trials per sweep point (experiment.trials).")
    common.add_argument(
        "--workers",
        type=int,
        default=None,
        help="Worker processes (experiment.workers; default: RIS_TRACK_WORKERS).",
    )
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="SECTION.KEY=VALUE",
        help="Override one config value; may be repeated.",
    )
    common.add_argument(
        "--log-level",
        default=None,
        help="Logging level (default: RIS_TRACK_LOG_LEVEL or WARNING).",
    )
    common.add_argument(
        "--archive",
        action="store_true",
        help="Move results of earlier runs into <out>/archive/<timestamp>/ first.",
    )

    sub = parser.add_subparsers(dest="command", required=True)
    sweep = sub.add_parser("localize-sweep", parents=[common], help="Localization error versus a swept parameter.")
    sweep.add_argument("--sweep", choices=SWEEP_VARIABLES, default=None, help="Swept variable (experiment.sweep).")
    sweep.add_argument("--values", default=None, help="Comma-separated sweep values (experiment.values).")
    sweep.add_argument("--dump-frames", action="store_true", help="Write trial-0 frames of the first point.")
    sub.add_parser("track", parents=[common], help="EKF tracking along the configured paths.")
    peb_map = sub.add_parser("peb-map", parents=[common], help="PEB heatmap over the map region.")
    peb_map.add_argument("--dump-fim", action="store_true", help="Also write the FIM at the configured RIS.")
    sub.add_parser("calibrate-noise", parents=[common], help="Measurement error statistics per receiver.")
    return parser


def _parse_values(text: str) -> List[float]:
    values = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        value = parse_value(item)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"sweep value {item!r} is not a number", field="experiment.values")
        values.append(value)
    if not values:
        raise ConfigError("--values is empty", field="experiment.values")
    return values


def _experiment_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    exp: Dict[str, Any] = {}
    if args.seed is not None:
        exp["seed"] = args.seed
    if args.out is not None:
        exp["out"] = args.out
    if args.trials is not None:
        exp["trials"] = args.trials
    workers = args.workers
    if workers is None and os.environ.get(ENV_WORKERS):
        try:
            workers = int(os.environ[ENV_WORKERS])
        except ValueError as exc:
            raise ConfigError(f"{ENV_WORKERS} must be an integer") from exc
    if workers is not None:
        exp["workers"] = workers
    if getattr(args, "sweep", None):
        exp["sweep"] = args.sweep
    if getattr(args, "values", None):
        exp["values"] = _parse_values(args.values)
    return {"experiment": exp} if exp else {}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, config file, --set overrides, then the dedicated flags."""
    overrides = [parse_overrides(args.overrides)]
    flags = _experiment_overrides(args)
    if flags:
        overrides.append(flags)
    return load_config(args.config, overrides=overrides)


def _configure_logging(level: Optional[str]) -> None:
    name = (level or os.environ.get(ENV_LOG_LEVEL) or "WARNING").upper()
    numeric = getattr(logging, name, None)
    if not isinstance(numeric, int):
        raise ConfigError(f"unknown log level {name!r}")
    logging.basicConfig(level=numeric, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    logging.getLogger().setLevel(numeric)


def _run(args: argparse.Namespace, cfg: RunConfig, out_dir: str) -> List[str]:
    if args.command == "localize-sweep":
        result = harness.run_localization_sweep(cfg, out_dir, dump_frames=args.dump_frames)
        for row in result.summary:
            print(
                f"{row['sweep']}={row['value']}: mean error {row['mean_err']:.4f} m "
                f"(ToA-only {row['mean_err_toa']:.4f} m), failed {row['failed']}/{row['trials']}"
            )
        return result.files
    if args.command == "track":
        result_t = harness.run_tracking_experiment(cfg, out_dir)
        for row in result_t.summary:
            print(
                f"{row['path']}: mean tracking error {row['mean_err_track']:.4f} m, "
                f"re-localization {row['mean_err_reloc']:.4f} m, skipped updates {row['skipped_updates']}"
            )
        return result_t.files
    if args.command == "peb-map":
        result_p = harness.run_peb_map(cfg, out_dir, dump_fim=args.dump_fim)
        print(f"PEB map: {len(result_p.rows)} cells, {result_p.missing} missing")
        return result_p.files
    calib = harness.calibrate_noise(cfg, out_dir)
    for row in calib.rows:
        print(
            f"rx {row['receiver']}: xi mse {row['xi_mse']:.3e} (crlb {row['xi_crlb']:.3e}), "
            f"alpha mse {row['alpha_mse']:.3e} (crlb {row['alpha_crlb']:.3e})"
        )
    return [os.path.join(out_dir, "calibration.csv")]


def main(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)

    try:
        _configure_logging(args.log_level)
        cfg = resolve_config(args)
        out_dir = reports.prepare_output_dir(cfg["experiment"]["out"], archive=args.archive)
    except ConfigError as exc:
        print(f"ERROR: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"ERROR: output directory: {exc}", file=sys.stderr)
        return 2

    record: Dict[str, Any] = {
        "command": args.command,
        "seed": cfg["experiment"]["seed"],
        "config_sha256": cfg.hash,
        "config_file": cfg.source,
    }
    logger.info("%s: config %s, output %s", args.command, cfg.hash, out_dir)
    try:
        files = _run(args, cfg, out_dir)
    except NumericalError as exc:
        status, error = 3, exc
    except (ConfigError, ScheduleError, ValueError) as exc:
        # ValueError: a parameter combination the config checks let through.
        status, error = 2, exc
    except OSError as exc:
        status, error = 2, exc
    else:
        reports.append_run_record(out_dir, {**record, "exit_status": 0, "files": files})
        return 0

    print(f"ERROR: {error}", file=sys.stderr)
    try:
        reports.append_run_record(out_dir, {**record, "exit_status": status, "error": str(error)})
    except OSError as exc:
        logger.warning("cannot append run record: %s", exc)
    return status


if __name__ == "__main__":
    raise SystemExit(main())
