"""Exit criteria, one test per criterion, each printing a PASS/FAIL line."""

import json
import math
import subprocess
import sys
import time

import numpy as np
import pytest
from scipy.optimize import brentq

from sublin1d.calculus import apriori_bound
from sublin1d.certify import (
    Verdict,
    certify,
    check_theorem_aa,
    check_theorem_bien,
)
from sublin1d.config import CATALOGUE, catalogue_problem, config_from_dict, manufactured_solution, step_config
from sublin1d.construct import construct, verify_subsolution
from sublin1d.eigen import principal_eigenpair
from sublin1d.model import Coefficient, Problem, normalize
from sublin1d.solve import (
    Grid,
    lift_exponent,
    named_nonlinearity,
    pstar_search,
    solve_certified,
    solve_general_f,
)

INNER = (0.4, 0.6)
SCALING_SET = ["step_seno", "step_lap", "step_drift", "step_kappa100", "manufactured"]


def step(eta, p=0.5, c=1.0, b=0.0):
    return normalize(config_from_dict(step_config(eta, p=p, c=c, b=b)).problem)


def margin(name, eta, p=0.5):
    P = step(eta, p=p)
    if name in ("seno", "expo", "lap", "rem"):
        return check_theorem_aa(P, INNER, name).margin
    return check_theorem_bien(P, INNER, name).margin


def test_eigenvalue_oracles(record):
    t0 = time.perf_counter()
    one = Coefficient.constant(1.0, 0, 1)
    lam1 = principal_eigenpair(Problem.simple(0, 1, one, 0.5), (0, 1)).lambda1
    lam2 = principal_eigenpair(Problem.simple(0, 1, one, 0.5, c=1.0), INNER).lambda1
    lam3 = principal_eigenpair(Problem.simple(0, 1, one, 0.5, b=4.0), (0, 1)).lambda1
    elapsed = time.perf_counter() - t0
    e1 = abs(lam1 - math.pi**2)
    e2 = abs(lam2 - (25 * math.pi**2 + 1)) / (25 * math.pi**2 + 1)
    e3 = abs(lam3 - (math.pi**2 + 4)) / (math.pi**2 + 4)
    ok = e1 <= 1e-8 and e2 <= 1e-6 and e3 <= 1e-6 and elapsed < 5
    record(1, ok, f"abs err {e1:.1e}, rel errs {e2:.1e} {e3:.1e}, {elapsed:.2f}s")
    assert ok


def test_condition_thresholds_on_step_problem(record):
    crit = {n: brentq(lambda e: margin(n, e), 1e-3, 1.0, xtol=1e-8) for n in ("seno", "expo", "i1")}
    ok = (abs(crit["seno"] - 0.1332) <= 1e-3 and abs(crit["expo"] - 0.0444) <= 1e-3
          and abs(crit["i1"] - 0.1305) <= 1e-3 and crit["seno"] > crit["i1"])
    record(2, ok, "critical eta " + ", ".join(f"{k}={v:.5f}" for k, v in crit.items()))
    assert ok


def test_sinh_and_cosh_conditions_are_not_comparable(record):
    a = margin("seno", 0.09) > 0 and margin("expo", 0.09) < 0
    b = margin("expo", 0.0215, p=0.01) > 0 and margin("seno", 0.0215, p=0.01) < 0
    xs = np.linspace(0.1, 10.0, 100)
    c = bool(np.all(np.sinh(xs / math.sqrt(2)) ** 2 > np.cosh(xs) - 1))
    record(3, a and b and c, f"p=1/2 eta=0.09: {a}; p=0.01 eta=0.0215: {b}; sinh^2 > cosh-1: {c}")
    assert a and b and c


def test_scaling_invariance(record):
    bad = []
    for name in SCALING_SET:
        P = catalogue_problem(name)
        base = certify(P)
        ref = [(r.name, r.holds) for r in base.reports]
        for tau in (0.1, 10.0):
            other = certify(P.with_(m=P.m.scaled(tau)))
            if other.verdict != base.verdict or [(r.name, r.holds) for r in other.reports] != ref:
                bad.append((name, tau))
    P = catalogue_problem("step_seno")
    lam = principal_eigenpair(P, INNER, tol=1e-10).lambda1
    rel = max(abs(principal_eigenpair(P.with_(m=P.m.scaled(t)), INNER, tol=1e-10).lambda1
                  - lam / t) / (lam / t) for t in (0.1, 10.0))
    ok = not bad and rel <= 1e-8
    record(4, ok, f"verdict changes {bad or 'none'}; lambda scaling rel err {rel:.1e}")
    assert ok


@pytest.fixture(scope="module")
def catalogue_solutions():
    out = {}
    for name in CATALOGUE:
        cert = certify(catalogue_problem(name))
        if cert.verdict == Verdict.EXISTS:
            spec = construct(cert)
            out[name] = (cert, spec, verify_subsolution(spec), solve_certified(cert))
    return out


def test_end_to_end_soundness(record, catalogue_solutions):
    rows = []
    ok = bool(catalogue_solutions)
    for name, (cert, spec, check, res) in catalogue_solutions.items():
        gaps = [j["value_gap"] for j in spec.junctions.values()]
        jumps = [j["slope_jump"] for j in spec.junctions.values()]
        good = (check.max_violation <= check.threshold
                and all(g <= 1e-10 for g in gaps) and all(j >= -1e-8 for j in jumps)
                and res.residual_inf <= 1e-6 and res.min_interior > 0)
        ok &= good
        rows.append(f"{name}:{'ok' if good else 'BAD'}")
    record(5, ok, " ".join(rows))
    assert ok


def test_apriori_bounds_hold(record, catalogue_solutions):
    rows, ok = [], True
    for name, (cert, spec, check, res) in catalogue_solutions.items():
        b = apriori_bound(cert.problem)
        good = res.sup <= b.inerte * (1 + 1e-6)
        if cert.problem.c.extremum(kind="min") > 0 and b.dudu is not None:
            good &= res.sup <= b.dudu * (1 + 1e-6)
        ok &= good
        rows.append(f"{name} {res.sup:.3g}<={b.bound:.3g}")
    record(6, ok, "; ".join(rows))
    assert ok


def test_manufactured_solution(record):
    P = catalogue_problem("manufactured")
    cert = certify(P)
    errs = {}
    for n in (500, 1000, 2000):
        res = solve_certified(cert, Grid(0.0, 1.0, n), n)
        errs[n] = float(np.max(np.abs(res.u - manufactured_solution(res.x))))
    ratio = errs[500] / errs[1000]
    ok = errs[2000] <= 5e-6 and 3.5 <= ratio <= 4.5
    record(7, ok, f"err(n=2000)={errs[2000]:.2e}, ratio 500/1000={ratio:.3f}")
    assert ok


def test_nonexistence_and_threshold_bracket(record):
    P = catalogue_problem("step_kappa100")
    cert = certify(P)
    nec = next(r for r in cert.reports if r.name == "nec")
    res = pstar_search(P, tol_p=0.02)
    found = any(v == Verdict.EXISTS.value and p < 1 for p, v in res.probes)
    parts = {
        "NotExists at p=0.3": cert.verdict == Verdict.NOT_EXISTS,
        "lhs 4 vs rhs 0.53": abs(nec.lhs - 4) < 1e-9 and abs(nec.rhs - 0.1 * 2.6 / 0.49) < 1e-9,
        "lower edge >= 0.70": res.not_exists_edge is not None and res.not_exists_edge >= 0.70,
        "Exists probe below 1": found,
        "width <= 0.02": res.width is not None and res.width <= 0.02,
    }
    ok = all(parts.values())
    detail = ", ".join(f"{k}: {v}" for k, v in parts.items())
    record(8, ok, f"bracket {res.bracket}; {detail}")
    assert ok, detail


def test_exponent_lifting(record, catalogue_solutions):
    res = catalogue_solutions["step_seno"][3]
    lift = lift_exponent(res, 0.75)
    ok = lift.gamma == 2.0 and lift.max_violation <= 0.0
    record(9, ok, f"gamma={lift.gamma}, max(L v - 2 m v^(3/4)) = {lift.max_violation:.2e}")
    assert ok


def test_general_nonlinearity(record):
    P = config_from_dict(step_config(0.05, c=1.0)).problem
    res = solve_general_f(P, named_nonlinearity("sqrt_sin10"))
    ok = res.residual_inf <= 1e-6 and res.min_interior > 0
    record(10, ok, f"residual {res.residual_inf:.2e}, min interior {res.min_interior:.2e}, "
               f"lower from {res.notes['lower_source']}")
    assert ok


def _cli(args, out):
    proc = subprocess.run([sys.executable, "-m", "sublin1d.cli", *args, "--out", str(out)],
                          capture_output=True, text=True)
    report = json.loads((out / "report.json").read_text()) if (out / "report.json").exists() else None
    return proc.returncode, report


def _verdicts(report):
    cert = report["certificate"]
    return cert["verdict"], cert["reason"], [(r["name"], r["holds"]) for r in cert["reports"]]


def test_cli_determinism_and_exit_codes(record, tmp_path, configs_dir):
    cfg = configs_dir / "step.json"
    c1, r1 = _cli(["certify", "--config", str(cfg)], tmp_path / "a")
    c2, r2 = _cli(["certify", "--config", str(cfg)], tmp_path / "b")
    c3, r3 = _cli(["certify", "--config", str(configs_dir / "negative.json")], tmp_path / "c")
    bad = tmp_path / "bad.json"
    bad.write_text('{"interval": [0, 1],\n "p": 0.5,,}')
    c4, _ = _cli(["certify", "--config", str(bad)], tmp_path / "d")
    same = _verdicts(r1) == _verdicts(r2)
    codes = {"Exists": 0, "NotExists": 1, "Inconclusive": 2}
    match = c1 == codes[r1["certificate"]["verdict"]] and c3 == codes[r3["certificate"]["verdict"]]
    ok = same and match and c1 == 0 and c3 == 1 and c4 == 3
    record(11, ok, f"identical verdict fields: {same}; exit codes {c1},{c2},{c3},{c4}")
    assert ok
