"""JSON reports and CSV series/field dumps."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .discretization import ScalarField

SCHEMA = 1

__all__ = ["SCHEMA", "jsonable", "build_report", "dumps_report", "write_report", "write_field_csv", "write_rows_csv"]


def jsonable(x):
    """Plain JSON types; non-finite floats become ``null`` / ``"inf"`` / ``"-inf"``."""
    if isinstance(x, dict):
        return {str(k): jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return jsonable(x.tolist())
    if isinstance(x, np.generic):
        return jsonable(x.item())
    if isinstance(x, float) and not math.isfinite(x):
        if math.isnan(x):
            return None
        return "inf" if x > 0 else "-inf"
    return x


def build_report(task: str, config: dict, result: dict, timing: dict, version: str) -> dict:
    return {
        "schema": SCHEMA,
        "version": version,
        "task": task,
        "config": jsonable(config),
        "result": jsonable(result),
        "timing": jsonable(timing),
    }


def dumps_report(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_report(path: str | Path, report: dict) -> None:
    Path(path).write_text(dumps_report(report))


def write_field_csv(path: str | Path, field: ScalarField, extra: dict | None = None) -> None:
    """Header ``x1,...,xn,value[,extra...]``, one row per node in C order."""
    pts = field.grid.points
    cols = [field.values] + [np.asarray(v) for v in (extra or {}).values()]
    header = [f"x{j + 1}" for j in range(pts.shape[1])] + ["value"] + list((extra or {}).keys())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k in range(pts.shape[0]):
            w.writerow([repr(float(v)) for v in pts[k]] + [repr(float(c[k])) for c in cols])


def write_rows_csv(path: str | Path, header: list[str], rows: list) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
