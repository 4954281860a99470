"""Command-line front end.

Exit codes: 0 existence certified / solved, 1 nonexistence, 2 inconclusive,
3 input error.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .calculus import apriori_bound
from .certify import Verdict, certify
from .config import ConfigError, config_from_dict, load_config, set_field
from .construct import ConstructionError, construct, subsolution_rows, verify_subsolution
from .model import ProblemError
from .solve import (
    SolveError,
    named_nonlinearity,
    pstar_search,
    solve_certified,
    solve_general_f,
)

log = logging.getLogger("sublin1d")

EXIT = {Verdict.EXISTS: 0, Verdict.NOT_EXISTS: 1, Verdict.INCONCLUSIVE: 2}
INPUT_ERROR = 3
SOLUTION_COLUMNS = ["x", "u", "Lu", "rhs", "residual"]
CONDITION_COLUMNS = ["name", "lhs", "rhs", "margin", "holds"]


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return "inf" if v == math.inf else f"{float(v):.17g}"
    return str(v)


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_report(out: Path, report: dict):
    with open(out / "report.json", "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, tuple):
        return list(v)
    raise TypeError(f"not serialisable: {type(v)}")


def _conditions_csv(out, cert):
    rows = [(r.name, r.lhs, r.rhs, r.margin, r.holds) for r in cert.reports]
    write_csv(out / "conditions.csv", CONDITION_COLUMNS, rows)


def _solution_report(result, problem):
    bound = apriori_bound(problem)
    return {
        "residual_inf": result.residual_inf,
        "min_interior": result.min_interior,
        "sup": result.sup,
        "iterations": result.iterations,
        "newton_steps": result.newton_steps,
        "apriori_bound": bound.bound,
        "within_apriori_bound": result.sup <= bound.bound * (1 + 1e-6),
        "notes": result.notes,
    }


def _solution_files(out, result):
    write_csv(out / "solution.csv", SOLUTION_COLUMNS, result.rows())
    write_csv(out / "trace.csv", ["iteration", "sup_change"],
              enumerate(result.monotone_trace, start=1))


# ---------------------------------------------------------------------------
# subcommands


def cmd_certify(cfg, args, out):
    cert = certify(cfg.problem, tol=cfg.tolerances["eigen"])
    _conditions_csv(out, cert)
    return EXIT[cert.verdict], {"certificate": cert.to_dict()}


def cmd_solve(cfg, args, out):
    cert = certify(cfg.problem, tol=cfg.tolerances["eigen"])
    _conditions_csv(out, cert)
    report = {"certificate": cert.to_dict()}
    if cert.verdict != Verdict.EXISTS:
        return EXIT[cert.verdict], report
    result = solve_certified(cert, n=cfg.grid, tol=cfg.tolerances["solver"])
    report["solution"] = _solution_report(result, cert.problem)
    _solution_files(out, result)
    ok = result.residual_inf <= 1e-6 and result.min_interior > 0
    return (0 if ok else 2), report


def cmd_subsolution(cfg, args, out):
    cert = certify(cfg.problem, tol=cfg.tolerances["eigen"])
    _conditions_csv(out, cert)
    report = {"certificate": cert.to_dict()}
    if cert.verdict != Verdict.EXISTS:
        return EXIT[cert.verdict], report
    spec = construct(cert)
    check = verify_subsolution(spec)
    write_csv(out / "subsolution.csv", SOLUTION_COLUMNS, subsolution_rows(spec))
    report["subsolution"] = {
        "tau": spec.tau,
        "method": spec.method,
        "condition": spec.condition,
        "junctions": spec.junctions,
        "pieces": check.per_piece,
        "max_violation": check.max_violation,
        "threshold": check.threshold,
        "passed": check.passed,
    }
    return (0 if check.passed else 2), report


def cmd_pstar(cfg, args, out):
    res = pstar_search(cfg.problem, tol_p=cfg.tolerances["p_bracket"])
    write_csv(out / "pstar.csv", ["p", "verdict"], sorted(res.probes))
    report = {"pstar": {"bracket": res.bracket, "exists_edge": res.exists_edge,
                        "not_exists_edge": res.not_exists_edge, "width": res.width,
                        "note": res.note, "probes": sorted(res.probes)}}
    if res.exists_edge is not None:
        return 0, report
    return (1 if res.not_exists_edge is not None else 2), report


def _sweep_one(job):
    raw, fields, value, tol = job
    raw = copy.deepcopy(raw)
    for f in fields:
        set_field(raw, f, value)
    cert = certify(config_from_dict(raw).problem, tol=tol)
    return value, cert.verdict.value, cert.reason


def cmd_sweep(cfg, args, out):
    if not args.sweep:
        raise ConfigError("sweep needs --sweep FIELD:LO:HI:STEPS")
    spec = args.sweep.rsplit(":", 3)
    if len(spec) != 4:
        raise ConfigError("--sweep expects FIELD:LO:HI:STEPS")
    fields = spec[0].split(",")
    try:
        lo, hi, steps = float(spec[1]), float(spec[2]), int(spec[3])
    except ValueError:
        raise ConfigError("--sweep bounds must be numbers and STEPS an integer") from None
    if steps < 1:
        raise ConfigError("--sweep STEPS must be positive")
    for f in fields:  # fail early on a bad path
        set_field(copy.deepcopy(cfg.raw), f, lo)
    values = np.linspace(lo, hi, steps) if steps > 1 else np.array([lo])
    jobs = [(cfg.raw, fields, float(v), cfg.tolerances["eigen"]) for v in values]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            rows = list(pool.map(_sweep_one, jobs))
    else:
        rows = [_sweep_one(j) for j in jobs]
    write_csv(out / "sweep.csv", ["value", "verdict", "reason"], rows)
    report = {"sweep": {"fields": fields, "rows": [list(r) for r in rows]}}
    return 0, report


def cmd_nonlinearity(cfg, args, out):
    spec = named_nonlinearity(args.nonlinearity)
    result = solve_general_f(cfg.problem, spec, n=cfg.grid)
    _solution_files(out, result)
    report = {"nonlinearity": spec.label, "solution": {
        "residual_inf": result.residual_inf, "min_interior": result.min_interior,
        "sup": result.sup, "notes": result.notes}}
    ok = result.residual_inf <= 1e-6 and result.min_interior > 0
    return (0 if ok else 2), report


COMMANDS = {
    "certify": cmd_certify,
    "solve": cmd_solve,
    "subsolution": cmd_subsolution,
    "pstar": cmd_pstar,
    "sweep": cmd_sweep,
    "nonlinearity": cmd_nonlinearity,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="sublin1d", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="problem file (JSON)")
    ap.add_argument("--out", default="out", help="output directory")
    ap.add_argument("--grid", type=int, help="interior grid nodes for the solvers")
    ap.add_argument("--tol", type=float, help="relative eigenvalue tolerance")
    ap.add_argument("--sweep", help="FIELD[,FIELD...]:LO:HI:STEPS (dotted config paths)")
    ap.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    ap.add_argument("--nonlinearity", default="sqrt_sin10")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.grid is not None:
            if args.grid < 10:
                raise ConfigError("--grid must be at least 10")
            cfg.grid = args.grid
        if args.tol is not None:
            if not args.tol > 0:
                raise ConfigError("--tol must be positive")
            cfg.tolerances["eigen"] = args.tol
    except (ConfigError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return INPUT_ERROR
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        code, report = COMMANDS[args.command](cfg, args, out)
    except (ConfigError, ProblemError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return INPUT_ERROR
    except (SolveError, ConstructionError) as exc:
        log.error("%s", exc)
        code, report = 2, {"error": str(exc)}
    report.update(command=args.command, config=str(args.config), name=cfg.name,
                  fingerprint=cfg.problem.fingerprint(), exit_code=code,
                  tolerances=cfg.tolerances, grid=cfg.grid)
    write_report(out, report)
    print(json.dumps({"command": args.command, "exit_code": code,
                      "verdict": report.get("certificate", {}).get("verdict")}))
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
