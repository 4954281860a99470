"""Sufficient and necessary conditions for a strictly positive solution."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import calculus
from .calculus import cp, derived_constants, plus_ratio_sup, tables
from .eigen import DEFAULT_N, DEFAULT_TOL, EigenError, principal_eigenpair
from .model import (Coefficient, NoPositivityError, Problem, candidate_intervals,
                    decompose_weight, normalize)

AA_VARIANTS = ("seno", "expo", "lap", "rem")
BIEN_VARIANTS = ("i1", "i2", "puf")
SUFFICIENT = AA_VARIANTS + BIEN_VARIANTS
STRICT = {"i2", "puf", "trivial_mplus"}
ORDER = {name: i for i, name in enumerate(("trivial_mplus", "nec", "nec_c") + SUFFICIENT)}

BALL_CENTERS = 256
BALL_RADII = 128
ROUNDING = 1e-13


class Verdict(str, enum.Enum):
    EXISTS = "Exists"
    NOT_EXISTS = "NotExists"
    INCONCLUSIVE = "Inconclusive"


@dataclass
class ConditionReport:
    name: str
    interval: tuple | None
    lhs: float
    rhs: float
    holds: bool
    quadrature_error: float = 0.0
    tau_window: tuple | None = None
    applicability: str = "applied"
    details: dict = field(default_factory=dict)

    @property
    def margin(self):
        return self.rhs - self.lhs

    @property
    def applied(self):
        return self.applicability == "applied"

    @property
    def decisive(self):
        """Margin clears the numerical error, so the boolean can be trusted."""
        return self.applied and abs(self.margin) > self.quadrature_error

    def to_dict(self):
        def num(v):
            return None if v is None or (isinstance(v, float) and math.isnan(v)) else (
                "inf" if v == math.inf else float(v))

        return {
            "name": self.name,
            "interval": None if self.interval is None else [float(v) for v in self.interval],
            "lhs": num(self.lhs), "rhs": num(self.rhs), "margin": num(self.margin),
            "holds": bool(self.holds), "decisive": bool(self.decisive),
            "quadrature_error": float(self.quadrature_error),
            "tau_window": None if self.tau_window is None else [num(v) for v in self.tau_window],
            "applicability": self.applicability,
            "details": {k: (float(v) if isinstance(v, (float, np.floating)) else v)
                        for k, v in self.details.items() if not k.startswith("_")},
        }


def skipped(name, interval, reason) -> ConditionReport:
    return ConditionReport(name, interval, math.nan, math.nan, False,
                           applicability=f"skipped: {reason}")


def _compare(name, interval, lhs, rhs, err, **details) -> ConditionReport:
    err = err + ROUNDING * max(abs(lhs), abs(rhs))
    holds = lhs < rhs - err if name in STRICT else lhs <= rhs
    return ConditionReport(name, interval, float(lhs), float(rhs), bool(holds), err,
                           details=details)


def _restriction(coef: Coefficient, lo, hi):
    return tuple((l, r, pc) for l, r, pc in coef.segments(lo, hi))


@lru_cache(maxsize=256)
def _eigen_cached(key, problem, interval, tol, n):
    return principal_eigenpair(problem, interval, tol, n)


def eigenpair(problem: Problem, interval, tol=DEFAULT_TOL, n=DEFAULT_N):
    """Principal eigenpair, cached on the data that actually enter it."""
    lo, hi = interval
    # Bunder enters only up to a constant factor, so b on I suffices.
    key = (lo, hi, tol, n) + tuple(_restriction(getattr(problem, k), lo, hi) for k in "bcm")
    return _eigen_cached(key, problem, tuple(interval), tol, n)


def _window(lam, lhs, strict):
    hi = math.inf if lhs <= 0 else 1.0 / lhs
    return (lam, hi)


def _finish(rep: ConditionReport, lam):
    if rep.holds:
        rep.tau_window = _window(lam, rep.lhs, rep.name in STRICT)
    return rep


# ---------------------------------------------------------------------------
# Theorem for b = 0: sinh / cosh / Laplacian-limit / M- variants


def _b_is_zero(problem):
    return problem.b.is_zero or problem.b.sup_norm() == 0.0


def check_theorem_aa(problem: Problem, interval, variant, tol=DEFAULT_TOL, n=DEFAULT_N):
    if variant not in AA_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if not _b_is_zero(problem):
        return skipped(variant, interval, "requires b = 0")
    k = derived_constants(problem, interval)
    mminus, cinf, g, Cp, p = k.mminus_sup, k.c_sup, k.gamma, k.Cp, problem.p
    details = {}
    if variant in ("seno", "expo") and cinf <= 0:
        return skipped(variant, interval, "division by ||c||_inf is zero; use lap")
    if variant == "lap" and cinf > 0:
        return skipped(variant, interval, "limit form is only a sufficient condition for c = 0")
    if variant == "rem":
        decomp = tables(problem).decomp
        cinf = max((problem.c.sup_norm(l, r) for l, r in decomp.minus_region), default=0.0)
        if cinf <= 0:
            return skipped(variant, interval, "||c|| on M- is zero")
    try:
        eig = eigenpair(problem, interval, tol, n)
    except EigenError as exc:
        return skipped(variant, interval, str(exc))
    lam = eig.lambda1
    if variant == "rem":
        # the construction needs c <= tau m+ on M+, tau >= lambda_1
        decomp = tables(problem).decomp
        gap = max((Coefficient.extremum(problem.c - decomp.m_plus.scaled(lam), l, r, "max")
                   for l, r in decomp.plus_region), default=-math.inf)
        details["remm_gap"] = gap
        if gap > 1e-12:
            return skipped(variant, interval, "c <= lambda_1 m+ fails on M+")
    if variant in ("seno", "rem"):
        lhs = mminus / cinf * math.sinh(g * math.sqrt(cinf / Cp)) ** 2
    elif variant == "expo":
        lhs = mminus / cinf * (math.cosh(g * math.sqrt((1 - p) * cinf)) - 1.0)
    else:
        lhs = g * g / Cp * mminus
    rep = _compare(variant, tuple(interval), lhs, 1.0 / lam, eig.error / lam**2,
                   lambda1=lam, lambda_h=eig.lambda_h, c_norm=cinf, **details)
    return _finish(rep, lam)


# ---------------------------------------------------------------------------
# Theorem for general drift, and the rescaled-weight corollary


def modified_weight(problem: Problem):
    """``m / (K_b ||m+||_2) - c`` together with the scale ``1 / (K_b ||m+||_2)``."""
    t = tables(problem)
    mp2 = t.grid.integral(t.grid.sample(t.decomp.m_plus) ** 2).value
    k = derived_constants(problem, (problem.alpha, problem.beta))
    denom = k.K_b * math.sqrt(mp2)
    if denom <= 0:
        raise NoPositivityError("||m+||_2 = 0: the rescaled weight is undefined")
    scale = 1.0 / denom
    return problem.m.scaled(scale) - problem.c, scale


def _check_i2(problem, interval, tol, n, name="i2"):
    k = derived_constants(problem, interval)
    try:
        eig = eigenpair(problem, interval, tol, n)
    except EigenError as exc:
        return skipped(name, interval, str(exc))
    lam = eig.lambda1
    lhs = (1 - problem.p) * k.M_script
    rep = _compare(name, tuple(interval), lhs, 1.0 / lam,
                   eig.error / lam**2 + (1 - problem.p) * k.quadrature_error,
                   lambda1=lam, lambda_h=eig.lambda_h, M_script=k.M_script)
    return _finish(rep, lam)


def check_theorem_bien(problem: Problem, interval, variant, tol=DEFAULT_TOL, n=DEFAULT_N):
    if variant not in BIEN_VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    if variant == "i2":
        if problem.c.sup_norm() != 0.0:
            return skipped("i2", interval, "requires c = 0")
        return _check_i2(problem, interval, tol, n)
    if variant == "puf":
        return _check_puf(problem, interval, tol, n)
    k = derived_constants(problem, interval)
    G2 = (k.gamma_b * k.Bunder_sup) ** 2
    den = k.Cp - k.c_sup * G2
    if den <= 0:
        return skipped("i1", interval, "denominator nonpositive")
    try:
        eig = eigenpair(problem, interval, tol, n)
    except EigenError as exc:
        return skipped("i1", interval, str(exc))
    lam = eig.lambda1
    lhs = G2 / den * k.mminus_sup
    rep = _compare("i1", tuple(interval), lhs, 1.0 / lam,
                   eig.error / lam**2 + k.quadrature_error * k.mminus_sup,
                   lambda1=lam, lambda_h=eig.lambda_h, gamma_b=k.gamma_b,
                   Bunder_sup=k.Bunder_sup)
    return _finish(rep, lam)


def puf_problem(problem: Problem):
    mod, scale = modified_weight(problem)
    zero = Coefficient.constant(0.0, problem.alpha, problem.beta)
    return problem.with_(m=mod, c=zero), scale


def _check_puf(problem, interval, tol, n):
    try:
        mod_problem, scale = puf_problem(problem)
    except NoPositivityError:
        raise
    lo, hi = interval
    try:
        subs = candidate_intervals(decompose_weight(mod_problem.m))
    except NoPositivityError:
        subs = []
    subs = [(max(l, lo), min(r, hi)) for l, r in subs if min(r, hi) > max(l, lo)]
    best = None
    for J in subs:
        rep = _check_i2(mod_problem, J, tol, n, name="puf")
        if not rep.applied:
            continue
        if best is None or rep.margin / rep.rhs > best.margin / best.rhs:
            best = rep
    if best is None:
        return skipped("puf", interval, "rescaled weight has no positivity interval in I")
    best.details["weight_scale"] = scale
    best.details["parent_interval"] = list(interval)
    return best


# ---------------------------------------------------------------------------
# necessary condition


def _sparse_table(vals, op):
    levels = [vals]
    k = 1
    while 2 * k <= len(vals):
        prev = levels[-1]
        levels.append(op(prev[:-k], prev[k:]))
        k *= 2
    return levels


def _range_query(levels, i, j, op):
    """``op`` over ``vals[i..j]`` inclusive, vectorised over index arrays."""
    span = j - i + 1
    lev = np.floor(np.log2(span)).astype(int)
    out = np.empty(len(i))
    for L in np.unique(lev):
        s = lev == L
        arr = levels[L]
        out[s] = op(arr[i[s]], arr[j[s] - (1 << L) + 1])
    return out


def _best_ball(problem: Problem, lo, hi, samples=4097):
    t = tables(problem)
    fac = t.factors
    Q = t.Q[0]
    y = np.linspace(lo, hi, samples)
    mm = np.maximum(t.decomp.m_minus(y), 0.0)
    bb = fac.Bbar(y)
    mins = _sparse_table(mm, np.minimum)
    maxs = _sparse_table(bb, np.maximum)
    i = np.arange(1, BALL_CENTERS)
    x0 = lo + (hi - lo) * i / BALL_CENTERS
    rmax = np.minimum(x0 - lo, hi - x0)
    j = np.arange(1, BALL_RADII + 1)
    X0 = np.repeat(x0, len(j))
    R = (rmax[:, None] * j[None, :] / BALL_RADII).ravel()
    ia = np.clip(np.searchsorted(y, X0 - R, side="left"), 0, samples - 1)
    ib = np.clip(np.searchsorted(y, X0 + R, side="right") - 1, 0, samples - 1)
    ib = np.maximum(ib, ia)
    inf_m = _range_query(mins, ia, ib, np.minimum)
    sup_b = _range_query(maxs, ia, ib, np.maximum)
    qc = Q(X0)
    gam = np.minimum(Q(X0 + R) - qc, qc - Q(X0 - R))
    score = (gam / sup_b) ** 2 * inf_m
    best = (0.0, None)
    for k in np.argsort(score)[::-1][:8]:
        a, b = X0[k] - R[k], X0[k] + R[k]
        inf_exact = max(0.0, t.decomp.m_minus.extremum(a, b, "min"))
        val = (gam[k] / fac.sup_Bbar(a, b)) ** 2 * inf_exact
        if val > best[0]:
            best = (float(val), (float(X0[k]), float(R[k])))
    return best


def check_necessary(problem: Problem) -> list[ConditionReport]:
    """Barrier test on balls where ``m <= 0``; a failing report rules out solutions.

    The supremum is taken over a finite family of balls, so the left side is a
    lower bound of the true one and a failure is always conclusive.
    """
    t = tables(problem)
    lhs, ball = 0.0, None
    for lo, hi in t.decomp.nonpositive_region:
        val, b = _best_ball(problem, lo, hi)
        if val > lhs:
            lhs, ball = val, b
    Cp = cp(problem.p)
    J = calculus.apriori_integral(problem)
    details = {} if ball is None else {"center": ball[0], "radius": ball[1]}
    out = [_compare("nec", None, lhs, Cp * J.value, Cp * J.error, **details)]
    ratio = plus_ratio_sup(problem)
    if ratio is not None:
        out.append(_compare("nec_c", None, lhs, Cp * ratio, 0.0, sup_ratio=ratio, **details))
    return out


def check_trivial(problem: Problem) -> ConditionReport:
    sup_plus = max(0.0, problem.m.extremum(kind="max"))
    return _compare("trivial_mplus", None, 0.0, sup_plus, 0.0)


# ---------------------------------------------------------------------------
# orchestration


@dataclass
class Certificate:
    verdict: Verdict
    reports: list
    problem: Problem
    witness: ConditionReport | None = None
    interval: tuple | None = None

    @property
    def reason(self):
        if self.witness is not None:
            return self.witness.name
        for r in self.reports:
            if r.name == "trivial_mplus" and not r.holds:
                return r.name
            if r.name in ("nec", "nec_c") and r.decisive and not r.holds:
                return r.name
        return None

    def to_dict(self):
        return {
            "verdict": self.verdict.value,
            "reason": self.reason,
            "interval": None if self.interval is None else [float(v) for v in self.interval],
            "tau_window": None if self.witness is None else self.witness.to_dict()["tau_window"],
            "reports": [r.to_dict() for r in self.reports],
        }


def _sort_key(rep):
    return (ORDER[rep.name], rep.interval or ())


def certify(problem: Problem, tol=DEFAULT_TOL, n=DEFAULT_N, variants=SUFFICIENT) -> Certificate:
    problem = normalize(problem)
    triv = check_trivial(problem)
    if not triv.holds:
        return Certificate(Verdict.NOT_EXISTS, [triv], problem)
    reports = [triv] + check_necessary(problem)
    if any(r.decisive and not r.holds for r in reports):
        return Certificate(Verdict.NOT_EXISTS, sorted(reports, key=_sort_key), problem)
    cands = candidate_intervals(tables(problem).decomp)
    ranked = []
    for I in cands:
        try:
            ranked.append((eigenpair(problem, I, tol, n).lambda1, I))
        except EigenError:
            ranked.append((math.inf, I))
    ranked.sort()
    witness = None
    for _, I in ranked:
        for v in variants:
            if v in AA_VARIANTS:
                rep = check_theorem_aa(problem, I, v, tol, n)
            else:
                rep = check_theorem_bien(problem, I, v, tol, n)
            rep.details.setdefault("candidate", list(I))
            reports.append(rep)
            if witness is None and rep.holds and rep.decisive:
                witness = rep
    reports.sort(key=_sort_key)
    if witness is not None:
        return Certificate(Verdict.EXISTS, reports, problem, witness,
                           tuple(witness.details.get("candidate", witness.interval)))
    return Certificate(Verdict.INCONCLUSIVE, reports, problem)
