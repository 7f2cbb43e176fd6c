"""Run configuration: TOML files, ``--set`` overrides, validation and defaults.

Grammar (every key not listed here is rejected)::

    task = "solve" | "check-class" | "verify-estimates" | "hconv" | "divcurl" | "effective"
    seed = <int>                       # required by every sampling task
    group = "euclidean:<n>" | "heisenberg1"

    [grid]        bounds = [[lo, hi], ...]   shape = <int> | [<int>, ...]
    [operator]    kind = "scalar_p_laplacian" | "linear_matrix" | "identity"
                  p = <float>  alpha = <float>  beta = <float>
                  coefficient = "constant:c" | "laminate:a1,a2" | "checkerboard:a1,a2"
                              | "smooth:amp" | "file:<path>"
                  matrix = [[...], ...]  scale = <int>
    [solver]      tol = <float>  max_iter = <int>  method = "auto" | "pcg" | "energy" | "fixed_point"
    [problem]     rhs = "const:c" | "sin" | "bump" | "file:<path>"
    [membership]  samples = <int>
    [estimates]   trials = <int>
    [hconv]       scales = [<int>, ...]  reference = "auto" | "homogenized" | "direct" | "none"
                  reference_refine = <int>
    [cutoff]      width = <float>
    [effective]   probes = [[...], ...]
"""
from __future__ import annotations

import copy
import csv
import sys
from pathlib import Path
from typing import Any, Callable

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from .discretization import Grid
from .errors import ConfigError
from .groups import CarnotGroup, parse_group
from .operators import OperatorSpec, linear_matrix, oscillate, parse_coefficient, scalar_p_laplacian

__all__ = [
    "TASKS",
    "SAMPLING_TASKS",
    "load_config",
    "parse_config",
    "apply_override",
    "resolve",
    "Resolved",
    "parse_probes",
]

TASKS = ("solve", "check-class", "verify-estimates", "hconv", "divcurl", "effective")
SAMPLING_TASKS = ("check-class", "verify-estimates", "hconv", "divcurl", "effective")

_SCHEMA: dict[str, Any] = {
    "task": None,
    "seed": None,
    "group": None,
    "grid": {"bounds": None, "shape": None},
    "operator": {"kind": None, "p": None, "alpha": None, "beta": None, "coefficient": None, "matrix": None,
                 "scale": None},
    "solver": {"tol": None, "max_iter": None, "method": None},
    "problem": {"rhs": None},
    "membership": {"samples": None},
    "estimates": {"trials": None},
    "hconv": {"scales": None, "reference": None, "reference_refine": None},
    "cutoff": {"width": None},
    "effective": {"probes": None},
}

_DEFAULTS: dict[str, Any] = {
    "solver": {"tol": 1e-10, "max_iter": 10_000, "method": "auto"},
    "problem": {"rhs": "const:1"},
    "membership": {"samples": 100_000},
    "estimates": {"trials": 100},
    "hconv": {"reference": "auto", "reference_refine": 4},
    "operator": {"kind": "scalar_p_laplacian", "coefficient": "constant:1", "scale": 1},
}


def _unknown_keys(data: dict, schema: dict, prefix: str = "") -> list[str]:
    bad = []
    for k, v in data.items():
        name = f"{prefix}{k}"
        if k not in schema:
            bad.append(name)
        elif isinstance(schema[k], dict):
            if not isinstance(v, dict):
                bad.append(f"{name} (expected a table)")
            else:
                bad += _unknown_keys(v, schema[k], name + ".")
    return bad


def parse_config(text: str, source: str = "<config>") -> dict:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        # the decoder message carries line and column
        raise ConfigError(f"{source}: {exc}") from None
    bad = _unknown_keys(data, _SCHEMA)
    if bad:
        raise ConfigError(f"{source}: unknown keys: {', '.join(sorted(bad))}")
    return data


def load_config(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    data = parse_config(path.read_text(), str(path))
    data.setdefault("_base_dir", str(path.resolve().parent))
    return data


def _parse_value(text: str) -> Any:
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_override(data: dict, assignment: str) -> dict:
    """Apply one ``section.key=value`` override (value parsed as a TOML value, else a string)."""
    key, sep, raw = assignment.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(f"malformed override {assignment!r}; expected key=value")
    parts = key.split(".")
    node = _SCHEMA
    for part in parts[:-1]:
        if not isinstance(node.get(part), dict):
            raise ConfigError(f"unknown keys: {key}")
        node = node[part]
    if parts[-1] not in node or isinstance(node[parts[-1]], dict):
        raise ConfigError(f"unknown keys: {key}")
    out = copy.deepcopy(data)
    cur = out
    for part in parts[:-1]:
        cur = cur.setdefault(part, {})
    cur[parts[-1]] = _parse_value(raw.strip())
    return out


# ------------------------------------------------------------------ resolution

def _get(data: dict, dotted: str, required: bool = False, default: Any = None) -> Any:
    cur: Any = data
    for part in dotted.split("."):
        if not isinstance(cur, dict) or part not in cur:
            if required:
                raise ConfigError(f"missing required key {dotted!r}")
            return default
        cur = cur[part]
    return cur


def _num(data: dict, dotted: str, kind: type, required: bool = False, default: Any = None) -> Any:
    v = _get(data, dotted, required, default)
    if v is None:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"key {dotted!r} must be a number, got {v!r}")
    if kind is int:
        if int(v) != v:
            raise ConfigError(f"key {dotted!r} must be an integer, got {v!r}")
        return int(v)
    return float(v)


def _path(base: str | None, p: str) -> Path:
    path = Path(p)
    if not path.is_absolute() and base:
        path = Path(base) / path
    if not path.exists():
        raise ConfigError(f"referenced file {path} does not exist")
    return path


class Resolved:
    """Validated configuration with constructed objects and the resolved dict."""

    def __init__(self, task: str, config: dict, group: CarnotGroup, grid: Grid, spec: OperatorSpec,
                 rhs: Callable, seed: int | None):
        self.task = task
        self.config = config
        self.group = group
        self.grid = grid
        self.spec = spec
        self.rhs = rhs
        self.seed = seed

    def section(self, name: str) -> dict:
        return self.config.get(name, {})


def _rhs_callable(text: str, grid: Grid, base: str | None) -> Callable:
    kind, _, arg = str(text).partition(":")
    kind = kind.strip().lower()
    box = np.asarray(grid.bounds, dtype=float)
    if kind in ("const", "constant"):
        try:
            c = float(arg)
        except ValueError:
            raise ConfigError(f"malformed rhs {text!r}") from None
        return lambda x: np.full(np.atleast_2d(x).shape[0], c)
    if kind == "sin":
        def fn(x):
            x = np.atleast_2d(x)
            t = (x - box[:, 0]) / (box[:, 1] - box[:, 0])
            return np.prod(np.sin(np.pi * t), axis=1)
        return fn
    if kind == "bump":
        def fn(x):
            x = np.atleast_2d(x)
            t = 2.0 * (x - box[:, 0]) / (box[:, 1] - box[:, 0]) - 1.0
            r2 = np.sum(t * t, axis=1) / 0.25
            out = np.zeros(x.shape[0])
            inside = r2 < 1.0
            out[inside] = np.exp(1.0 - 1.0 / (1.0 - r2[inside]))
            return out
        return fn
    if kind == "file":
        path = _path(base, arg.strip())
        with open(path) as fh:
            rows = list(csv.reader(fh))
        try:
            table = np.asarray([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
        except ValueError:
            raise ConfigError(f"rhs file {path} holds non-numeric entries") from None
        if table.ndim != 2 or table.shape[1] != grid.ndim + 1:
            raise ConfigError(f"rhs file {path} must have columns x1..x{grid.ndim},value")
        pts, vals = table[:, :-1], table[:, -1]

        def fn(x):
            x = np.atleast_2d(x)
            if x.shape != pts.shape or not np.allclose(x, pts, rtol=0, atol=1e-12):
                raise ConfigError(f"rhs file {path} does not match the grid nodes")
            return vals.copy()
        return fn
    raise ConfigError(f"malformed rhs {text!r}; expected const:c | sin | bump | file:<path>")


def resolve(data: dict, task: str | None = None) -> Resolved:
    """Check required keys, fill defaults and build group, grid and operator."""
    base = data.get("_base_dir")
    cfg = {k: copy.deepcopy(v) for k, v in data.items() if k != "_base_dir"}
    for sec, vals in _DEFAULTS.items():
        tgt = cfg.setdefault(sec, {})
        for k, v in vals.items():
            tgt.setdefault(k, v)
    task = task or _get(cfg, "task", required=True)
    if task not in TASKS:
        raise ConfigError(f"task must be one of {', '.join(TASKS)}, got {task!r}")
    cfg["task"] = task

    seed = _num(cfg, "seed", int)
    if task in SAMPLING_TASKS and seed is None:
        raise ConfigError(f"missing required key 'seed' (task {task} samples random data)")

    try:
        group = parse_group(str(_get(cfg, "group", required=True)))
    except ValueError as exc:
        raise ConfigError(f"group: {exc}") from None
    cfg["group"] = group.name

    shape = _get(cfg, "grid.shape", required=True)
    if isinstance(shape, int) and not isinstance(shape, bool):
        shape = [shape] * group.n
    bounds = _get(cfg, "grid.bounds", default=[[0.0, 1.0]] * group.n)
    try:
        grid = Grid(tuple(tuple(float(v) for v in b) for b in bounds), tuple(int(s) for s in shape))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"grid: {exc}") from None
    if grid.ndim != group.n:
        raise ConfigError(f"grid has {grid.ndim} axes but group {group.name} has dimension {group.n}")
    cfg["grid"] = {"bounds": [list(b) for b in grid.bounds], "shape": list(grid.shape)}

    p = _num(cfg, "operator.p", float, required=True)
    kind = str(_get(cfg, "operator.kind"))
    alpha = _num(cfg, "operator.alpha", float)
    beta = _num(cfg, "operator.beta", float)
    coef_text = str(_get(cfg, "operator.coefficient"))
    if coef_text.startswith("file:"):
        coef_text = "file:" + str(_path(base, coef_text[5:].strip()))
    try:
        coef = parse_coefficient(coef_text, group)
        if kind == "scalar_p_laplacian":
            spec = scalar_p_laplacian(p, coef, alpha, beta)
        elif kind in ("linear_matrix", "identity"):
            if p != 2.0:
                raise ConfigError(f"operator.kind {kind} requires operator.p = 2")
            matrix = np.eye(group.m) if kind == "identity" else _get(cfg, "operator.matrix", required=True)
            spec = linear_matrix(matrix, coef, alpha, beta)
            if spec.matrix_array.shape != (group.m, group.m):
                raise ConfigError(f"operator.matrix must be {group.m}x{group.m}")
        else:
            raise ConfigError(f"operator.kind must be scalar_p_laplacian | linear_matrix | identity, got {kind!r}")
        scale = _num(cfg, "operator.scale", int)
        if scale != 1:
            spec = oscillate(spec, scale)
    except (ValueError, FileNotFoundError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"operator: {exc}") from None
    cfg["operator"].update({"p": spec.p, "alpha": spec.alpha, "beta": spec.beta, "coefficient": str(coef)})

    for key, kind_ in (("solver.tol", float), ("solver.max_iter", int), ("membership.samples", int),
                       ("estimates.trials", int), ("hconv.reference_refine", int), ("cutoff.width", float)):
        v = _num(cfg, key, kind_)
        if v is not None:
            sec, k = key.split(".")
            cfg[sec][k] = v
    if task in ("hconv", "divcurl", "effective"):
        scales = _get(cfg, "hconv.scales", required=True)
        if not isinstance(scales, list) or not all(isinstance(s, int) and not isinstance(s, bool) for s in scales):
            raise ConfigError("hconv.scales must be a list of integers")
    if task == "effective":
        probes = _get(cfg, "effective.probes")
        if probes is None:
            probes = [list(row) for row in np.eye(group.m)]
            cfg.setdefault("effective", {})["probes"] = probes
        if not all(isinstance(r, list) and len(r) == group.m for r in probes):
            raise ConfigError(f"effective.probes must be a list of {group.m}-vectors")

    rhs = _rhs_callable(cfg["problem"]["rhs"], grid, base)
    return Resolved(task, cfg, group, grid, spec, rhs, seed)


def parse_probes(text: str, m: int) -> list[list[float]]:
    """``"1,0;0,1"`` -> ``[[1, 0], [0, 1]]``."""
    out = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            vec = [float(v) for v in chunk.split(",")]
        except ValueError:
            raise ConfigError(f"malformed probe {chunk!r}") from None
        if len(vec) != m:
            raise ConfigError(f"probe {chunk!r} must have {m} components")
        out.append(vec)
    if not out:
        raise ConfigError("no probes given")
    return out
