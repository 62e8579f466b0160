"""Trace and summary files.

Trace CSV columns, in order::

    t, x1_true..x4_true, y_clean, y_attacked,
    then for each filter F in (ekf, ckf, sckf) that was run:
    F_x1..F_x4, F_g, F_d, F_chi2_alarm, F_euclid_alarm

Floats are written with ``repr`` so a read-back is exact. Alarm columns are
0/1. The statistics are ``nan`` on the first row, before any update.
"""

import csv
import json
import math
import os
import tempfile
from contextlib import contextmanager
from dataclasses import asdict, is_dataclass
from pathlib import Path

import numpy as np
import yaml

from .exceptions import IoError
from .harness import ScenarioTrace

FILTER_ORDER = ("ekf", "ckf", "sckf")
STATE_COLS = ("x1", "x2", "x3", "x4")
TRACE_FORMATS = ("csv", "jsonl")


def trace_header(filters=FILTER_ORDER):
    cols = ["t"] + [f"{c}_true" for c in STATE_COLS] + ["y_clean", "y_attacked"]
    for name in FILTER_ORDER:
        if name in filters:
            cols += [f"{name}_{c}" for c in STATE_COLS]
            cols += [f"{name}_g", f"{name}_d", f"{name}_chi2_alarm", f"{name}_euclid_alarm"]
    return cols


def _rows(trace: ScenarioTrace):
    names = [n for n in FILTER_ORDER if n in trace.filters]
    for k in range(len(trace)):
        row = [float(trace.t[k]), *map(float, trace.x_true[k]),
               float(trace.y_clean[k]), float(trace.y_attacked[k])]
        for n in names:
            row += [*map(float, trace.estimates[n][k]), float(trace.g[n][k]),
                    float(trace.d[n][k]), int(trace.chi2_alarm[n][k]),
                    int(trace.euclid_alarm[n][k])]
        yield row


@contextmanager
def atomic_write(path, mode="w"):
    """Write to a temporary file in the target directory, then rename."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from None
    try:
        with os.fdopen(fd, mode, newline="" if "b" not in mode else None) as fh:
            yield fh
        os.replace(tmp, path)
    except OSError as exc:
        _silent_unlink(tmp)
        raise IoError(f"cannot write {path}: {exc}") from None
    except BaseException:
        _silent_unlink(tmp)
        raise


def _silent_unlink(path):
    try:
        os.unlink(path)
    except OSError:
        pass


def export_trace(trace: ScenarioTrace, path, fmt="csv"):
    """Write ``trace`` as CSV or as line-delimited JSON records."""
    if fmt not in TRACE_FORMATS:
        raise ValueError(f"format must be one of {TRACE_FORMATS}")
    header = trace_header(trace.filters)
    with atomic_write(path) as fh:
        if fmt == "csv":
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in _rows(trace):
                writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
        else:
            for row in _rows(trace):
                rec = {k: (None if isinstance(v, float) and math.isnan(v) else v)
                       for k, v in zip(header, row)}
                fh.write(json.dumps(rec) + "\n")
    return Path(path)


def read_trace(path, fmt=None) -> ScenarioTrace:
    """Inverse of :func:`export_trace`; ``attack_active`` is not stored and reads back as ``None``."""
    path = Path(path)
    fmt = fmt or ("jsonl" if path.suffix == ".jsonl" else "csv")
    try:
        with open(path, newline="") as fh:
            if fmt == "csv":
                reader = csv.reader(fh)
                header = next(reader)
                rows = [list(map(float, r)) for r in reader]
            else:
                records = [json.loads(line) for line in fh if line.strip()]
                header = list(records[0]) if records else trace_header()
                rows = [[math.nan if r[k] is None else float(r[k]) for k in header]
                        for r in records]
    except (OSError, StopIteration) as exc:
        raise IoError(f"cannot read trace {path}: {exc}") from None
    except ValueError as exc:
        raise IoError(f"malformed trace {path}: {exc}") from None
    data = np.array(rows, dtype=float).reshape(len(rows), len(header))
    col = {name: data[:, i] for i, name in enumerate(header)}
    missing = [c for c in trace_header(()) if c not in col]
    if missing:
        raise IoError(f"trace {path} lacks columns {missing}")
    trace = ScenarioTrace(
        t=col["t"],
        x_true=np.column_stack([col[f"{c}_true"] for c in STATE_COLS]),
        y_clean=col["y_clean"],
        y_attacked=col["y_attacked"],
        attack_active=None,
    )
    for name in FILTER_ORDER:
        if f"{name}_x1" not in col:
            continue
        trace.estimates[name] = np.column_stack([col[f"{name}_{c}"] for c in STATE_COLS])
        trace.g[name] = col[f"{name}_g"]
        trace.d[name] = col[f"{name}_d"]
        trace.chi2_alarm[name] = col[f"{name}_chi2_alarm"].astype(bool)
        trace.euclid_alarm[name] = col[f"{name}_euclid_alarm"].astype(bool)
    return trace


def _jsonable(obj):
    if is_dataclass(obj):
        obj = asdict(obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return None if not math.isfinite(v) else v
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(obj, path):
    with atomic_write(path) as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return Path(path)


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, ValueError) as exc:
        raise IoError(f"cannot read {path}: {exc}") from None


def write_yaml(obj, path, comment=None):
    with atomic_write(path) as fh:
        if comment:
            for line in comment.splitlines():
                fh.write(f"# {line}\n")
        yaml.safe_dump(_jsonable(obj), fh, sort_keys=False)
    return Path(path)
