"""Command-line interface.

Exit codes: 0 success, 1 input error, 2 numerical non-convergence, 64 usage.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .for_engine import ScenarioConfig, extract_boundaries, load_scenario_config, run_for_determination
from .grid_model import CaseError, GridCase, load_grid_case, validate_case, case_from_dict
from .powerflow import ConvergenceError, solve_newton_raphson
from .sensitivity import LinearizationError, compute_sensitivities
from .validation import BaseFlowError, default_magnitudes, ptdf_deviation_sweep

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NONCONVERGENCE = 2
EXIT_USAGE = 64

logger = logging.getLogger("flexagg")


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class _JsonFormatter(logging.Formatter):
    def format(self, record):
        return json.dumps({"level": record.levelname, "logger": record.name, "message": record.getMessage()},
                          sort_keys=True)


@dataclass
class RunManifest:
    command: str
    inputs: list
    config_hash: str
    version: str
    timestamp: str
    outputs: list = field(default_factory=list)
    options: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = float(epoch) if epoch else time.time()
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def make_manifest(command: str, input_texts: dict, options: dict, seed=None) -> RunManifest:
    """Manifest whose hash covers the command, input contents, options and tool version."""
    options = dict(options, seed=seed)
    payload = {
        "command": command,
        "inputs": {name: hashlib.sha256(text.encode()).hexdigest() for name, text in sorted(input_texts.items())},
        "options": options,
        "version": __version__,
    }
    digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()
    return RunManifest(command, sorted(input_texts), digest, __version__, _timestamp(), [], options)


def _fmt(x) -> str:
    x = float(x)
    return "nan" if np.isnan(x) else repr(x)


def _read_text(path: str) -> str:
    p = Path(path)
    if not p.exists():
        bundled = resources.files("flexagg") / "data" / p.name
        if p.parent == Path(".") and bundled.is_file():
            return bundled.read_text(encoding="utf-8")
        raise InputError(f"file not found: {path}")
    try:
        return p.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def _load_case(path: str):
    text = _read_text(path)
    return load_grid_case(text), text


def _out_dir(args) -> Path:
    d = Path(args.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_manifest(manifest: RunManifest, out: Path, stem: str):
    path = out / f"{stem}_manifest.json"
    manifest.outputs.append(str(path))
    path.write_text(json.dumps(manifest.to_dict(), indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


# --- commands --------------------------------------------------------------------------

def cmd_pf(args) -> int:
    case, text = _load_case(args.case)
    manifest = make_manifest("pf", {args.case: text}, {"tolerance": args.tolerance, "max_iter": args.max_iter},
                             seed=args.seed)
    try:
        sol = solve_newton_raphson(case, tolerance=args.tolerance, max_iter=args.max_iter)
    except ConvergenceError as exc:
        report = exc.report
        out = {"report": {"converged": False, "iterations": report.iterations if report else None,
                          "final_mismatch": report.final_mismatch if report else None},
               "error": str(exc), "manifest": manifest.to_dict()}
        print(json.dumps(out, indent=2, sort_keys=True))
        logger.error("%s", exc)
        return EXIT_NONCONVERGENCE
    data = sol.to_dict()
    if args.out_dir is not None:
        out = _out_dir(args)
        path = out / "pf_solution.json"
        manifest.outputs.append(str(path))
        path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
        _write_manifest(manifest, out, "pf")
    data["manifest"] = manifest.to_dict()
    print(json.dumps(data, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_ptdf(args) -> int:
    case, text = _load_case(args.case)
    manifest = make_manifest("ptdf", {args.case: text}, {"tolerance": args.tolerance}, seed=args.seed)
    sol = solve_newton_raphson(case, tolerance=args.tolerance)
    bundle = compute_sensitivities(sol, case)
    out = _out_dir(args)
    n, b = case.n_bus, case.n_branch
    buses = [f"bus{k}" for k in range(n)]
    flow_rows = [f"p_branch{k}" for k in range(b)] + [f"q_branch{k}" for k in range(b)]
    cur_rows = [f"i_from_branch{k}" for k in range(b)] + [f"i_to_branch{k}" for k in range(b)]
    for name, mat, rows in (("PQ_T_P", bundle.PQ_T_P, flow_rows), ("PQ_T_Q", bundle.PQ_T_Q, flow_rows),
                            ("ID_TB", bundle.ID_TB, cur_rows), ("IU_TB", bundle.IU_TB, cur_rows)):
        path = out / f"ptdf_{name}.csv"
        _write_csv(path, ["row"] + buses, ([r] + [float(v) for v in line] for r, line in zip(rows, mat)))
        manifest.outputs.append(str(path))
    _write_manifest(manifest, out, "ptdf")
    print(json.dumps({"outputs": manifest.outputs}, indent=2))
    return EXIT_OK


def _for_one(case: GridCase, config: ScenarioConfig, out: Path, pf_options: dict):
    sc = config.scenario
    try:
        sc.validate(case)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    run = run_for_determination(case, sc, config.k_max, config.relinearize, pf_options=pf_options)
    boundaries = extract_boundaries(run)
    base = case.base_power
    paths = []
    for bd in boundaries:
        path = out / f"for_{sc.name}_ic{bd.interconnection + 1}.csv"
        rows = []
        for sweep, pts, sts in (("upper", bd.upper, bd.upper_status), ("lower", bd.lower, bd.lower_status)):
            for k, (pt, st) in enumerate(zip(pts, sts)):
                rows.append([k, sweep, float(pt[0] * base), float(pt[1] * base), st])
        _write_csv(path, ["sample", "sweep", "p_vert_mw", "q_vert_mvar", "lp_status"], rows)
        paths.append(str(path))
    early = [f"{r.sweep}[{r.k}]: {r.message}" for r in run.samples if r.message]
    summary = {
        "scenario": sc.name,
        "priority_interconnection": sc.priority_interconnection,
        "q_thresh_mvar": [sc.q_thresh_pos * base, sc.q_thresh_neg * base],
        "k_max": config.k_max,
        "relinearize": config.relinearize,
        "solver": run.solver,
        "complete": all(r.status == "optimal" for r in run.samples),
        "early_stops": early,
        "interconnections": [
            {"index": bd.interconnection, "branch": case.interconnections[bd.interconnection],
             "base_p_mw": run.base_flows[bd.interconnection, 0] * base,
             "base_q_mvar": run.base_flows[bd.interconnection, 1] * base,
             "area_mw_mvar": bd.area() * base * base,
             "csv": paths[bd.interconnection]}
            for bd in boundaries
        ],
    }
    spath = out / f"for_{sc.name}_summary.json"
    spath.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return paths + [str(spath)]


def cmd_for(args) -> int:
    case, text = _load_case(args.case)
    inputs = {args.case: text}
    configs = []
    for sp in args.scenario:
        stext = _read_text(sp)
        inputs[sp] = stext
        try:
            configs.append(load_scenario_config(stext, case.base_power))
        except ValueError as exc:
            raise InputError(f"{sp}: {exc}") from exc
    if len({c.scenario.name for c in configs}) != len(configs):
        raise InputError("scenario names must be distinct")
    manifest = make_manifest("for", inputs, {"tolerance": args.tolerance}, seed=args.seed)
    out = _out_dir(args)
    for config in configs:
        manifest.outputs += _for_one(case, config, out, {"tolerance": args.tolerance})
    _write_manifest(manifest, out, "for")
    print(json.dumps({"outputs": manifest.outputs}, indent=2))
    return EXIT_OK


def _parse_branch(text: str) -> int:
    t = text.lower()
    if t.startswith("ic"):
        t = t[2:]
    try:
        k = int(t)
    except ValueError as exc:
        raise UsageError(f"--branch expects ic<k> (1-based), got {text!r}") from exc
    if k < 1:
        raise UsageError(f"--branch is 1-based, got {text!r}")
    return k - 1


def cmd_validate(args) -> int:
    case, text = _load_case(args.case)
    branch = _parse_branch(args.branch)
    if branch >= len(case.interconnections):
        raise InputError(f"--branch {args.branch}: case has {len(case.interconnections)} interconnections")
    if not 0 <= args.bus < case.n_bus or args.bus == case.slack_bus:
        raise InputError(f"--bus {args.bus} is not a non-slack bus of the case")
    mags = default_magnitudes() if args.magnitudes is None else np.array(args.magnitudes, dtype=float)
    manifest = make_manifest("validate", {args.case: text},
                             {"branch": branch, "bus": args.bus, "type": args.type,
                              "magnitudes": [float(m) for m in mags], "q_floor": args.q_floor}, seed=args.seed)
    try:
        sweep = ptdf_deviation_sweep(case, branch, args.bus, args.type, mags, q_floor=args.q_floor)
    except BaseFlowError as exc:
        raise InputError(str(exc)) from exc
    out = _out_dir(args)
    path = out / f"validate_ic{branch + 1}_bus{args.bus}_{args.type}.csv"
    _write_csv(path, ["magnitude", "q_predicted", "q_true", "deviation"],
               ([float(m), float(qp), float(qt), float(d)] for m, qp, qt, d, _ in sweep.rows()))
    manifest.outputs.append(str(path))
    _write_manifest(manifest, out, f"validate_ic{branch + 1}_bus{args.bus}_{args.type}")
    print(json.dumps({"outputs": manifest.outputs, "max_abs_deviation": float(np.nanmax(np.abs(sweep.deviations)))},
                     indent=2))
    return EXIT_OK


def cmd_case_check(args) -> int:
    text = _read_text(args.case)
    try:
        case = case_from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise CaseError(f"invalid JSON: {exc}") from exc
    diags = validate_case(case)
    report = {"valid": not diags, "diagnostics": diags, "n_bus": case.n_bus, "n_branch": case.n_branch,
              "n_interconnections": len(case.interconnections), "n_flexibilities": len(case.flexibilities)}
    print(json.dumps(report, indent=2))
    return EXIT_OK if not diags else EXIT_INPUT


# --- parser -------------------------------------------------------------------------------

def _global_flags(parser, suppress: bool):
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--out-dir", default=d(None), help="directory for output files (default: current)")
    parser.add_argument("--tolerance", type=float, default=d(1e-8), help="power flow mismatch tolerance, p.u.")
    parser.add_argument("--seed", type=int, default=d(None), help="reserved; recorded in the manifest")
    parser.add_argument("--json-logs", action="store_true", default=d(False), help="log to stderr as JSON lines")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="flexagg", description="PQ-flexibility aggregation at HV-EHV interconnections")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    common = _Parser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("pf", parents=[common], help="solve the AC power flow, print JSON")
    p.add_argument("case")
    p.add_argument("--max-iter", type=int, default=20)
    p.set_defaults(func=cmd_pf)

    p = sub.add_parser("ptdf", parents=[common], help="write PTDF and current sensitivity matrices as CSV")
    p.add_argument("case")
    p.set_defaults(func=cmd_ptdf)

    p = sub.add_parser("for", parents=[common], help="determine interconnection FORs for scenario files")
    p.add_argument("case")
    p.add_argument("scenario", nargs="+")
    p.set_defaults(func=cmd_for)

    p = sub.add_parser("validate", parents=[common], help="PTDF vs power flow deviation sweep")
    p.add_argument("case")
    p.add_argument("--branch", required=True, help="interconnection, 1-based (ic1, ic2, ...)")
    p.add_argument("--bus", type=int, required=True, help="0-based injection bus index")
    p.add_argument("--type", choices=("p", "q"), required=True)
    p.add_argument("--magnitudes", type=float, nargs="+", default=None)
    p.add_argument("--q-floor", type=float, default=1e-4)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("case-check", parents=[common], help="validate a case file and list diagnostics")
    p.add_argument("case")
    p.set_defaults(func=cmd_case_check)
    return parser


def _setup_logging(json_logs: bool):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(_JsonFormatter() if json_logs else logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    logger.handlers[:] = [handler]
    logger.setLevel(logging.INFO)
    logger.propagate = False


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.json_logs)
    if args.out_dir is None and args.command != "pf":
        args.out_dir = "."
    if not args.tolerance > 0:
        parser.error("--tolerance must be positive")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (InputError, CaseError) as exc:
        logger.error("%s", exc)
        for d in getattr(exc, "diagnostics", []):
            logger.error("  %s", d)
        return EXIT_INPUT
    except (ConvergenceError, LinearizationError) as exc:
        logger.error("numerical failure: %s", exc)
        return EXIT_NONCONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
