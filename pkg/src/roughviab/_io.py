"""CSV/JSON writers with round-trip float formatting (17 significant digits)."""
from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

FLOAT_FMT = "%.17g"


def write_csv(path, header: list[str], columns) -> Path:
    path = Path(path)
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        np.savetxt(fh, data, fmt=FLOAT_FMT, delimiter=",")
    return path


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x) or math.isinf(x):
            return str(x)
        # 17 significant digits, parsed back so json emits a plain number
        return float(FLOAT_FMT % x)
    return obj


def write_json(path, payload) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
