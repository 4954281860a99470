"""Explicit sub- and supersolutions, glued piecewise and checked numerically."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .calculus import cp, derived_constants, tables
from .certify import Certificate, ConditionReport, Verdict, eigenpair, puf_problem
from .eigen import EigenPair
from .model import NoPositivityError, Problem

SCAN_POINTS = 4096
VERIFY_POINTS = 10_000
VALUE_TOL = 1e-10
SLOPE_TOL = 1e-8
EPS_START = 1e-3

METHOD_OF = {"seno": "sinh", "rem": "sinh", "expo": "cosh", "lap": "i1", "i1": "i1",
             "i2": "i2", "puf": "i2"}


class ConstructionError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# base functions F with u = F^k


class SinhBase:
    kind = "sinh-power"

    def __init__(self, amp, rate, anchor, mirrored):
        self.amp, self.rate, self.anchor, self.sign = amp, rate, anchor, -1.0 if mirrored else 1.0

    def __call__(self, x, order=0):
        s = self.rate * self.sign * (np.asarray(x, dtype=float) - self.anchor)
        d = (self.sign * self.rate) ** order
        return self.amp * d * (np.cosh(s) if order == 1 else np.sinh(s))


class CoshBase:
    kind = "cosh-power"

    def __init__(self, amp, rate, anchor, mirrored):
        self.amp, self.rate, self.anchor, self.sign = amp, rate, anchor, -1.0 if mirrored else 1.0

    def __call__(self, x, order=0):
        s = self.rate * self.sign * (np.asarray(x, dtype=float) - self.anchor)
        if order == 0:
            return self.amp * (np.cosh(s) - 1.0)
        d = (self.sign * self.rate) ** order
        return self.amp * d * (np.sinh(s) if order == 1 else np.cosh(s))


class IntegralBase:
    """``sigma * int Bbar * inner`` from the left end (or to the right end).

    ``inner`` is ``1`` for the first drift construction, and the L1 norm
    ``||m- Bunder + eps||`` over ``(alpha, y)`` (resp. ``(y, beta)``) for the
    second one.
    """

    kind = "integral-power"

    def __init__(self, problem: Problem, sigma, mirrored, eps=None):
        self.problem, self.sigma, self.mirrored, self.eps = problem, sigma, mirrored, eps
        t = tables(problem)
        self._t = t
        nodes = t.grid.nodes.ravel()
        inner = self._inner(nodes).reshape(t.grid.nodes.shape)
        self._cum = t.grid.cumulative(t.bbar * inner)
        self._total = float(self._cum(problem.beta))

    def _inner(self, x):
        if self.eps is None:
            return np.ones_like(x)
        Gm = self._t.Gminus[0]
        al, be = self.problem.alpha, self.problem.beta
        if self.mirrored:
            return Gm(be) - Gm(x) + self.eps * (be - x)
        return Gm(x) + self.eps * (x - al)

    def __call__(self, x, order=0):
        x = np.asarray(x, dtype=float)
        sgn = -1.0 if self.mirrored else 1.0
        if order == 0:
            c = self._cum(x)
            return self.sigma * (self._total - c if self.mirrored else c)
        bbar = self._t.factors.Bbar(x)
        d1 = sgn * self.sigma * bbar * self._inner(x)
        if order == 1:
            return d1
        extra = 0.0
        if self.eps is not None:
            mminus = self._t.decomp.m_minus(x)
            extra = self.sigma * (mminus + self.eps * bbar)
        return self.problem.b(x) * d1 + extra


class PowerPiece:
    """``u = F^k`` with exact first and second derivatives."""

    def __init__(self, base, k, lo, hi, params=None):
        self.base, self.k, self.lo, self.hi = base, k, lo, hi
        self.kind = base.kind
        self.params = params or {}

    def __call__(self, x, order=0):
        F = np.maximum(self.base(x), 0.0)
        k = self.k
        if order == 0:
            return F**k
        F1 = self.base(x, 1)
        if order == 1:
            return k * F ** (k - 1) * F1
        F2 = self.base(x, 2)
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = np.where(F > 0, k * (k - 1) * F ** (k - 2) * F1**2, 0.0)
        return t1 + k * F ** (k - 1) * F2


class ZeroPiece:
    kind = "zero"

    def __init__(self, lo, hi):
        self.lo, self.hi = lo, hi

    def __call__(self, x, order=0):
        return np.zeros_like(np.asarray(x, dtype=float))


class EigenPiece:
    kind = "eigenfunction-sample"

    def __init__(self, eig: EigenPair, lo, hi):
        self.eig, self.lo, self.hi = eig, lo, hi

    def __call__(self, x, order=0):
        return self.eig.u2(x, order)


@dataclass
class PiecewiseFunction:
    pieces: list
    alpha: float
    beta: float

    def __call__(self, x, order=0):
        x = np.asarray(x, dtype=float)
        xf = np.atleast_1d(x)
        out = np.zeros_like(xf)
        edges = np.array([pc.lo for pc in self.pieces[1:]])
        idx = np.searchsorted(edges, xf, side="right")
        for k in np.unique(idx):
            sel = idx == k
            out[sel] = self.pieces[k](xf[sel], order)
        return out[0] if x.ndim == 0 else out

    def sample(self, x):
        return self(x)


# ---------------------------------------------------------------------------
# outer pieces


def build_outer_pieces(problem: Problem, interval, tau, method, c_norm=None, eps=None):
    """Left piece on ``[alpha, x1]`` and mirrored right piece on ``[x0, beta]``.

    Returns ``(u1, u3, params)``; a piece is ``None`` when ``m-`` vanishes.
    """
    x0, x1 = interval
    al, be, p = problem.alpha, problem.beta, problem.p
    K = derived_constants(problem, interval)
    mm = K.mminus_sup
    Cp = cp(p)
    cinf = K.c_sup if c_norm is None else c_norm
    params = {"method": method}
    if mm == 0:
        return None, None, params
    if method == "sinh":
        k = 2.0 / (1.0 - p)
        amp, rate = math.sqrt(tau * mm / cinf), math.sqrt(cinf / Cp)
        u1 = PowerPiece(SinhBase(amp, rate, al, False), k, al, x1)
        u3 = PowerPiece(SinhBase(amp, rate, be, True), k, x0, be)
        params.update(k=k, amplitude=amp, rate=rate)
    elif method == "cosh":
        k = 1.0 / (1.0 - p)
        amp, rate = tau * mm / cinf, math.sqrt(cinf / k)
        u1 = PowerPiece(CoshBase(amp, rate, al, False), k, al, x1)
        u3 = PowerPiece(CoshBase(amp, rate, be, True), k, x0, be)
        params.update(k=k, amplitude=amp, rate=rate)
    elif method == "i1":
        k = 2.0 / (1.0 - p)
        sigma = math.sqrt(K.Bunder_sup**2 * (tau * mm + K.c_sup) / Cp)
        u1 = PowerPiece(IntegralBase(problem, sigma, False), k, al, x1)
        u3 = PowerPiece(IntegralBase(problem, sigma, True), k, x0, be)
        params.update(k=k, sigma=sigma)
    elif method == "i2":
        k = 1.0 / (1.0 - p)
        sigma = tau * (1.0 - p)
        eps = EPS_START if eps is None else eps
        for _ in range(60):
            u1 = PowerPiece(IntegralBase(problem, sigma, False, eps), k, al, x1)
            u3 = PowerPiece(IntegralBase(problem, sigma, True, eps), k, x0, be)
            if _sup(u1, al, x1) <= 1.0 and _sup(u3, x0, be) <= 1.0:
                break
            eps /= 2
        params.update(k=k, sigma=sigma, epsilon=eps)
    else:
        raise ValueError(f"unknown method {method!r}")
    for u, lo, hi, end in ((u1, al, x1, al), (u3, x0, be, be)):
        xs = np.linspace(lo, hi, SCAN_POINTS)
        vals = u(xs)
        if abs(float(u(end))) > 1e-14:
            raise ConstructionError("outer piece does not vanish at the boundary")
        steps = np.diff(vals) if u is u1 else -np.diff(vals)
        if np.any(steps < -1e-15):
            raise ConstructionError("outer piece is not monotone")
        if np.max(vals) > 1.0 + 1e-12:
            raise ConstructionError("tau outside admissible window (outer piece exceeds 1)")
    return u1, u3, params


def _sup(u, lo, hi):
    return float(np.max(u(np.linspace(lo, hi, SCAN_POINTS))))


# ---------------------------------------------------------------------------
# gluing


@dataclass
class SubsolutionSpec:
    tau: float
    method: str
    k: float
    sigma: float | None
    epsilon: float | None
    x_under0: float
    x_over1: float
    glued: PiecewiseFunction
    problem: Problem
    interval: tuple
    eig: EigenPair
    condition: str | None = None
    junctions: dict = field(default_factory=dict)

    def sample(self, x):
        return self.glued(x)

    def scaled_to_original(self):
        """Factor turning a subsolution for ``tau m`` into one for ``m``."""
        return self.tau ** (-1.0 / (1.0 - self.problem.p))


def _crossing(diff, a, b, from_left):
    xs = np.linspace(a, b, SCAN_POINTS + 1)
    d = diff(xs)
    order = range(1, len(xs)) if from_left else range(len(xs) - 2, -1, -1)
    prev = 0 if from_left else len(xs) - 1
    for j in order:
        if d[j] <= 0:
            lo, hi = sorted((xs[prev], xs[j]))
            if d[j] == 0:
                return xs[j]
            return brentq(lambda t: float(diff(t)), lo, hi, xtol=1e-14, rtol=1e-15)
        prev = j
    return None


def glue(u1, eig: EigenPair, u3, interval, problem: Problem, tau, method, params,
         condition=None) -> SubsolutionSpec:
    x0, x1 = interval
    al, be = problem.alpha, problem.beta
    u2 = eig.u2
    junctions = {}
    if math.isclose(x0, al, abs_tol=1e-14):
        xl, u1 = al, None
    elif u1 is None:
        xl = x0
    else:
        xl = _crossing(lambda t: u1(t) - u2(t), x0, x1, True)
        if xl is None:
            raise ConstructionError("left piece never meets the eigenfunction")
    if math.isclose(x1, be, abs_tol=1e-14):
        xr, u3 = be, None
    elif u3 is None:
        xr = x1
    else:
        xr = _crossing(lambda t: u3(t) - u2(t), x0, x1, False)
        if xr is None:
            raise ConstructionError("right piece never meets the eigenfunction")
    if not xl < xr:
        raise ConstructionError(f"junctions out of order: {xl} >= {xr}")
    for name, left, right, at in (("left", u1, u2, xl), ("right", u2, u3, xr)):
        if at in (al, be):
            continue
        lv = 0.0 if left is None else float(left(at))
        rv = 0.0 if right is None else float(right(at))
        ld = 0.0 if left is None else float(left(at, 1))
        rd = 0.0 if right is None else float(right(at, 1))
        junctions[name] = {"x": at, "value_gap": abs(lv - rv), "slope_jump": rd - ld}
        if abs(lv - rv) > VALUE_TOL:
            raise ConstructionError(f"{name} junction value gap {abs(lv - rv):.3g}")
        if ld > rd + SLOPE_TOL:
            raise ConstructionError(f"{name} junction derivative ordering violated")
    pieces = []
    if xl > al:
        pieces.append(ZeroPiece(al, xl) if u1 is None else _clip(u1, al, xl))
    pieces.append(EigenPiece(eig, xl, xr))
    if xr < be:
        pieces.append(ZeroPiece(xr, be) if u3 is None else _clip(u3, xr, be))
    glued = PiecewiseFunction(pieces, al, be)
    return SubsolutionSpec(tau, method, params.get("k", 2.0 / (1 - problem.p)),
                           params.get("sigma"), params.get("epsilon"), xl, xr, glued,
                           problem, tuple(interval), eig, condition, junctions)


def _clip(piece, lo, hi):
    return PowerPiece(piece.base, piece.k, lo, hi, piece.params)


def choose_tau(report: ConditionReport, eig: EigenPair):
    lo, hi = report.tau_window
    if report.name in ("i2", "puf"):
        return 2.0 * lo if hi == math.inf else math.sqrt(lo * hi)
    # the sampled eigenfunction satisfies the discrete equation with lambda_h
    tau = max(lo, eig.lambda_h)
    return tau if tau <= hi else lo


def construct(certificate: Certificate, tol=None, n=None) -> SubsolutionSpec:
    """Glued subsolution for the problem named by an Exists certificate.

    For the rescaled-weight route the subsolution belongs to the auxiliary
    problem ``-u'' + b u' = tau (s m - c) u^p``.
    """
    if certificate.verdict != Verdict.EXISTS:
        raise ConstructionError("certificate does not prove existence")
    rep = certificate.witness
    problem = certificate.problem
    if rep.name == "puf":
        problem, _ = puf_problem(problem)
    interval = tuple(rep.interval)
    kw = {} if tol is None else {"tol": tol}
    if n is not None:
        kw["n"] = n
    eig = eigenpair(problem, interval, **kw)
    tau = choose_tau(rep, eig)
    c_norm = rep.details.get("c_norm") if rep.name == "rem" else None
    method = METHOD_OF[rep.name]
    u1, u3, params = build_outer_pieces(problem, interval, tau, method, c_norm=c_norm)
    return glue(u1, eig, u3, interval, problem, tau, method, params, condition=rep.name)


# ---------------------------------------------------------------------------
# verification


@dataclass
class Verification:
    max_violation: float
    threshold: float
    per_piece: list

    @property
    def passed(self):
        return self.max_violation <= self.threshold


def _operator(problem, u, x):
    return -u(x, 2) + problem.b(x) * u(x, 1) + problem.c(x) * u(x)


def verify_subsolution(spec, problem: Problem | None = None, tau=None,
                       points=VERIFY_POINTS) -> Verification:
    """Check ``-u'' + b u' + c u <= tau m u^p`` piece by piece.

    Closed-form pieces use exact derivatives on ``points`` interior nodes; the
    sampled eigenfunction piece is checked with the difference operator it
    solves on its own grid.
    """
    if isinstance(spec, SubsolutionSpec):
        problem = problem or spec.problem
        tau = spec.tau if tau is None else tau
        glued = spec.glued
    else:
        glued = spec
        tau = 1.0 if tau is None else tau
    p = problem.p
    m_sup = problem.m.sup_norm()
    threshold = 1e-8 * (1.0 + tau * m_sup)
    worst, rows = -math.inf, []
    for pc in glued.pieces:
        if pc.kind == "zero":
            v = 0.0
        elif pc.kind == "eigenfunction-sample":
            v = pc.eig.residual(tau, p, pc.lo, pc.hi)
        else:
            x = np.linspace(pc.lo, pc.hi, points + 2)[1:-1]
            u = pc(x)
            v = float(np.max(_operator(problem, pc, x) - tau * problem.m(x) * u**p))
        rows.append({"kind": pc.kind, "lo": pc.lo, "hi": pc.hi, "max_violation": v})
        worst = max(worst, v)
    return Verification(worst, threshold, rows)


def subsolution_rows(spec: SubsolutionSpec, points=2001):
    """``x, u, Lu, rhs, residual`` with ``rhs = tau m u^p``, at interior sample points.

    Points inside the eigenfunction piece use the spline's derivatives, so
    ``Lu`` there carries interpolation error; the verdict comes from
    :func:`verify_subsolution`.
    """
    problem, tau, p = spec.problem, spec.tau, spec.problem.p
    x = np.linspace(problem.alpha, problem.beta, points)[1:-1]
    u = spec.glued(x)
    Lu = _operator(problem, spec.glued, x)
    rhs = tau * problem.m(x) * np.power(np.maximum(u, 0.0), p)
    return np.column_stack([x, u, Lu, rhs, Lu - rhs])


# ---------------------------------------------------------------------------
# supersolution


@dataclass
class SupersolutionSpec:
    phi: object  # GridFunction
    k_super: float
    problem: Problem
    x: np.ndarray
    values: np.ndarray
    max_violation: float

    def sample(self, x):
        return self.k_super * (self.phi(x) + 1.0)


def build_supersolution(problem: Problem, n=2000) -> SupersolutionSpec:
    """``k (phi + 1)`` with ``L phi = m+``, ``phi = 0`` at the ends."""
    from .eigen import GridFunction
    from .solve import Grid, apply_operator, solve_linear

    decomp = tables(problem).decomp
    if decomp.m_plus.is_zero:
        raise NoPositivityError("m+ vanishes: no solution exists")
    grid = Grid.for_problem(problem, n)
    phi = solve_linear(problem, decomp.m_plus, grid)
    full = np.concatenate([[0.0], phi, [0.0]])
    phi_fn = GridFunction(grid.x, full)
    k = (float(np.max(full)) + 1.0) ** (problem.p / (1.0 - problem.p))
    vals = k * (full + 1.0)
    lhs = apply_operator(problem, grid, vals)
    viol = float(np.max(problem.m(grid.interior) * vals[1:-1] ** problem.p - lhs))
    return SupersolutionSpec(phi_fn, k, problem, grid.x, vals, viol)
