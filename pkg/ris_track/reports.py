"""Output files of experiment runs.

These helpers are called by the harness and the CLI:
  - output directory setup, optionally archiving the results of earlier runs
  - atomic CSV/JSON writers; every CSV starts with a `# config_sha256=<hex>` line
  - a JSONL run log appended under an advisory lock
  - binary frame dumps with a JSON sidecar
"""

from __future__ import annotations

import csv
import json
import os
import shutil
from datetime import datetime
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np

from .channel_sim import OfdmParams, RxFrameSet
from .phase_codebook import PhaseSchedule

try:
    import fcntl  # type: ignore
except ImportError:  # pragma: no cover
    fcntl = None  # type: ignore

RUN_LOG_NAME = "runs.jsonl"
SCHEDULE_NAME = "schedule.json"
ARCHIVE_DIR_NAME = "archive"
FRAME_DTYPE = "<c8"


def archive_previous_results(out_dir: str, *, timestamp: Optional[str] = None) -> Optional[str]:
    """Move the result files of earlier runs into out_dir/archive/<timestamp>/.

    The run log stays in place so runs.jsonl keeps the full history. Returns
    the archive directory, or None when there was nothing to move.
    """
    try:
        names = sorted(os.listdir(out_dir))
    except FileNotFoundError:
        return None
    previous = [n for n in names if n not in (RUN_LOG_NAME, ARCHIVE_DIR_NAME)]
    if not previous:
        return None

    stamp = timestamp or datetime.now().strftime("%Y%m%dT%H%M%S")
    target = os.path.join(out_dir, ARCHIVE_DIR_NAME, stamp)
    suffix = 1
    while os.path.exists(target):
        target = os.path.join(out_dir, ARCHIVE_DIR_NAME, f"{stamp}-{suffix}")
        suffix += 1
    os.makedirs(target)
    for name in previous:
        shutil.move(os.path.join(out_dir, name), os.path.join(target, name))
    return target


def prepare_output_dir(out_dir: str, *, archive: bool = False) -> str:
    """Absolute out_dir, created if missing; with archive, earlier results are moved aside first.

    Raises OSError when the directory cannot be created or archived.
    """
    out_dir = os.path.abspath(out_dir)
    if os.path.exists(out_dir) and not os.path.isdir(out_dir):
        raise NotADirectoryError(f"output path {out_dir} is not a directory")
    if archive:
        archive_previous_results(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    return out_dir


def _atomic_write_text(path: str, text: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="") as f:
        f.write(text)
    os.replace(tmp, path)


def write_json(path: str, payload: Any) -> None:
    _atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def format_cell(value: Any) -> str:
    """CSV cell text; floats use repr so identical runs give identical bytes."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def write_csv(path: str, rows: Iterable[Mapping[str, Any]], fieldnames: Sequence[str], *,
              config_hash: str) -> int:
    """Write rows atomically; returns the number of data rows."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    tmp = f"{path}.tmp.{os.getpid()}"
    count = 0
    with open(tmp, "w", encoding="utf-8", newline="") as f:
        f.write(f"# config_sha256={config_hash}\n")
        writer = csv.DictWriter(f, fieldnames=list(fieldnames), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: format_cell(row.get(k)) for k in fieldnames})
            count += 1
    os.replace(tmp, path)
    return count


def read_csv(path: str) -> List[Dict[str, str]]:
    """Rows of a CSV written by write_csv (the hash comment is skipped)."""
    with open(path, "r", encoding="utf-8", newline="") as f:
        lines = [line for line in f if not line.startswith("#")]
    return list(csv.DictReader(lines))


def read_config_hash(path: str) -> Optional[str]:
    with open(path, "r", encoding="utf-8") as f:
        first = f.readline().strip()
    prefix = "# config_sha256="
    return first[len(prefix):] if first.startswith(prefix) else None


def append_run_record(out_dir: str, record: Dict[str, Any]) -> None:
    """Append one JSON line to <out_dir>/runs.jsonl; failures are ignored."""
    payload = dict(record)
    payload["logged_at"] = datetime.now().isoformat()
    path = os.path.join(out_dir, RUN_LOG_NAME)
    line = json.dumps(payload, ensure_ascii=False, sort_keys=True) + "\n"
    try:
        os.makedirs(out_dir, exist_ok=True)
        with open(path, "a", encoding="utf-8") as f:
            if fcntl is not None:
                try:
                    fcntl.flock(f.fileno(), fcntl.LOCK_EX)
                except OSError:
                    pass
            try:
                f.write(line)
                f.flush()
            finally:
                if fcntl is not None:
                    try:
                        fcntl.flock(f.fileno(), fcntl.LOCK_UN)
                    except OSError:
                        pass
    except OSError:
        pass


def read_run_records(out_dir: str) -> List[Dict[str, Any]]:
    path = os.path.join(out_dir, RUN_LOG_NAME)
    if not os.path.exists(path):
        return []
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError:
                continue
    return records


def write_schedule(out_dir: str, sched: PhaseSchedule) -> str:
    path = os.path.join(out_dir, SCHEDULE_NAME)
    write_json(path, sched.as_dict())
    return path


def dump_frames(path: str, frames: RxFrameSet, ofdm: OfdmParams) -> str:
    """Write frames as little-endian complex64, receiver-major then row-major, plus <path>.json."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    stacked = np.stack(frames.frames).astype(FRAME_DTYPE)
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(stacked.tobytes(order="C"))
    os.replace(tmp, path)
    write_json(
        f"{path}.json",
        {
            "receivers": int(stacked.shape[0]),
            "n_subcarriers": int(stacked.shape[1]),
            "slots": int(stacked.shape[2]),
            "dtype": FRAME_DTYPE,
            "ofdm": ofdm.as_dict(),
            "meta": {k: v for k, v in frames.meta.items() if isinstance(v, (int, float, str, bool))},
        },
    )
    return path


def load_frames(path: str) -> RxFrameSet:
    with open(f"{path}.json", "r", encoding="utf-8") as f:
        side = json.load(f)
    shape = (side["receivers"], side["n_subcarriers"], side["slots"])
    data = np.fromfile(path, dtype=side["dtype"])
    if data.size != shape[0] * shape[1] * shape[2]:
        raise ValueError(f"{path}: {data.size} samples, sidecar says {shape}")
    cube = data.reshape(shape).astype(complex)
    return RxFrameSet(tuple(cube[i] for i in range(shape[0])), meta=dict(side.get("meta", {})))


def fim_rows(matrix: np.ndarray, labels: Sequence[str]) -> List[Dict[str, Any]]:
    """One row per FIM row, columns named by parameter label."""
    rows = []
    for i, label in enumerate(labels):
        row: Dict[str, Any] = {"param": label}
        row.update({labels[j]: float(matrix[i, j]) for j in range(len(labels))})
        rows.append(row)
    return rows
