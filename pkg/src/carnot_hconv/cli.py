"""Command-line entry point ``carnot-hconv``.

Exit status: 0 on success, 1 on configuration errors, 2 when a numerical
solve did not converge (the report is still written).
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._kernels import BACKEND
from .config import TASKS, Resolved, apply_override, load_config, parse_probes, resolve
from .discretization import ScalarField, dual_norm
from .errors import ConfigError
from .hconv import CutoffSpec, SequenceConfig, divcurl_check, effective_membership, estimate_effective, run_hconv
from .operators import verify_membership
from .report import build_report, write_field_csv, write_report, write_rows_csv
from .solver import WeakProblem, apriori_check, residual_dual_norm, solve, verify_estimates

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NONCONVERGED = 2

log = logging.getLogger("carnot_hconv")


def _side_path(out: Path, suffix: str) -> Path:
    return out.with_name(out.stem + suffix)


def _sequence(r: Resolved) -> SequenceConfig:
    h = r.section("hconv")
    width = r.section("cutoff").get("width")
    try:
        cutoff = CutoffSpec.default(r.grid, width)
        return SequenceConfig(
            r.group,
            r.grid,
            r.spec,
            tuple(h["scales"]),
            rhs=r.rhs,
            rhs_label=str(r.section("problem")["rhs"]),
            cutoff=cutoff,
            tol=r.section("solver")["tol"],
            max_iter=r.section("solver")["max_iter"],
            membership_samples=int(r.section("membership")["samples"]),
            seed=int(r.seed),
            reference=h["reference"],
            reference_refine=int(h["reference_refine"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _task_solve(r: Resolved, args, out: Path):
    s = r.section("solver")
    f = ScalarField(r.grid, np.asarray(r.rhs(r.grid.points), dtype=float))
    problem = WeakProblem(r.group, r.grid, r.spec, f)
    u, rep = solve(problem, tol=s["tol"], max_iter=s["max_iter"], method=s["method"])
    result = {"solve": rep.to_dict()}
    if rep.converged:
        f_dual = dual_norm(f, r.group, r.spec.p, tol=s["tol"])
        result["apriori"] = apriori_check(problem, u, rep, s["tol"], f_dual)
        result["residual_dual_norm"] = residual_dual_norm(problem, u, tol=s["tol"])
        result["max_abs_u"] = float(np.max(np.abs(u.values)))
    if args.dump_field:
        write_field_csv(_side_path(out, ".field.csv"), u)
    summary = (
        f"solve: method={rep.method} converged={rep.converged} iterations={rep.iterations} "
        f"residual={rep.final_residual:.3e} |u|_V={rep.v_norm_u:.6g}"
    )
    return result, summary, rep.converged, {"solve_s": rep.wall_time}


def _task_check_class(r: Resolved, args, out: Path):
    n = int(r.section("membership")["samples"])
    rep = verify_membership(r.spec, r.group, r.grid, n, r.seed)
    summary = (
        f"check-class: alpha_emp={rep.empirical_alpha:.6g} beta_emp={rep.empirical_beta:.6g} "
        f"violations={rep.violations}/{rep.sample_count}"
    )
    return {"membership": rep.to_dict()}, summary, True, {}


def _task_verify(r: Resolved, args, out: Path):
    s = r.section("solver")
    rep = verify_estimates(r.spec, r.group, r.grid, int(r.section("estimates")["trials"]), r.seed,
                           tol=s["tol"], max_iter=s["max_iter"])
    v = rep.violations
    summary = (
        f"verify-estimates: trials={rep.trials} violations a={v['a']} b={v['b']} c={v['c']} "
        f"solver_failures={len(rep.solver_failures)}"
    )
    return {"estimates": rep.to_dict()}, summary, not rep.solver_failures, {}


def _task_hconv(r: Resolved, args, out: Path):
    cfg = _sequence(r)
    fields: dict = {}
    rep = run_hconv(cfg, fields_out=fields)
    rows = [(rec.scale, k, v) for rec in rep.scales if rec.converged for k, v in enumerate(rec.pairings)]
    write_rows_csv(_side_path(out, ".series.csv"), ["scale", "k", "pairing"], rows)
    if args.dump_field and fields:
        last = max(fields)
        write_field_csv(_side_path(out, ".field.csv"), fields[last],
                        {f"value_scale{n}": fields[n].values for n in sorted(fields) if n != last})
    ok = all(rec.converged for rec in rep.scales)
    summary = (
        f"hconv: scales={list(cfg.scales)} converged={sum(rec.converged for rec in rep.scales)}/{len(rep.scales)} "
        f"bounds_hold={rep.bounds_hold} tail_ratio={rep.tail_ratio:.4g}"
    )
    return {"hconv": rep.to_dict()}, summary, ok, {}


def _task_divcurl(r: Resolved, args, out: Path):
    cfg = _sequence(r)
    rep = divcurl_check(cfg)
    write_rows_csv(_side_path(out, ".series.csv"), ["scale", "value"], list(zip(rep.scales, rep.values)))
    ratio = "n/a" if rep.final_gap_ratio is None else f"{rep.final_gap_ratio:.4g}"
    summary = f"divcurl: scales={rep.scales} reference={rep.reference_kind} final_gap_ratio={ratio}"
    return {"divcurl": rep.to_dict()}, summary, all(rep.converged), {}


def _task_effective(r: Resolved, args, out: Path):
    cfg = _sequence(r)
    probes = parse_probes(args.probes, r.group.m) if args.probes else r.section("effective")["probes"]
    r.config.setdefault("effective", {})["probes"] = probes
    try:
        ests = estimate_effective(cfg, probes)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    result: dict = {"estimates": [e.to_dict() for e in ests]}
    if len(ests) >= 2:
        result["membership"] = effective_membership(ests, r.spec.alpha, r.spec.beta, r.spec.p).to_dict()
    rows = [
        (n, i, c, mom[c]) for i, e in enumerate(ests) for n, mom in zip(e.scales, e.momenta) for c in range(len(mom))
    ]
    write_rows_csv(_side_path(out, ".series.csv"), ["scale", "probe", "component", "momentum"], rows)
    ok = all(all(e.converged) for e in ests)
    lim = "; ".join(",".join(f"{v:.6g}" for v in e.extrapolated) for e in ests)
    return result, f"effective: probes={len(ests)} extrapolated=[{lim}]", ok, {}


_TASKS = {
    "solve": _task_solve,
    "check-class": _task_check_class,
    "verify-estimates": _task_verify,
    "hconv": _task_hconv,
    "divcurl": _task_divcurl,
    "effective": _task_effective,
}


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="carnot-hconv", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("run",) + TASKS:
        sp = sub.add_parser(name, help="task from the config file" if name == "run" else f"run the {name} task")
        sp.add_argument("--config", required=True, help="TOML run configuration")
        sp.add_argument("--out", default="report.json", help="report path (default: report.json)")
        sp.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key; repeatable, last wins")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--dump-field", choices=["csv"], help="write nodal solution values next to the report")
        sp.add_argument("--probes", help='effective-operator probes, e.g. "1,0;0,1;1,1"')
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Path(args.out)
    try:
        data = load_config(args.config)
        for ov in args.overrides:
            data = apply_override(data, ov)
        if args.seed is not None:
            data["seed"] = args.seed
        task = None if args.command == "run" else args.command
        r = resolve(data, task)
        t0 = time.perf_counter()
        result, summary, ok, timing = _TASKS[r.task](r, args, out)
        timing = {"total_s": time.perf_counter() - t0, **timing}
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    config = dict(r.config)
    config["kernel_backend"] = BACKEND
    write_report(out, build_report(r.task, config, result, timing, __version__))
    print(summary)
    return EXIT_OK if ok else EXIT_NONCONVERGED


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
