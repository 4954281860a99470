"""Finite-difference solvers: linear problems, monotone iteration, Newton polish."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

from .model import Problem

DEFAULT_NODES = 2000
MONO_TOL = 1e-12
NEWTON_TOL = 1e-10
MAX_ITER = 10_000


class SolveError(RuntimeError):
    pass


@dataclass
class Grid:
    """Uniform grid; ``x`` includes both ends, ``interior`` does not."""

    alpha: float
    beta: float
    n: int  # interior nodes

    @classmethod
    def for_problem(cls, problem: Problem, n=DEFAULT_NODES):
        # central differences stay monotone once h |b| / 2 < 1
        bsup = problem.b.sup_norm()
        while (problem.beta - problem.alpha) / (n + 1) * bsup / 2 >= 1:
            n = 2 * n + 1
        return cls(problem.alpha, problem.beta, n)

    @property
    def h(self):
        return (self.beta - self.alpha) / (self.n + 1)

    @property
    def x(self):
        return np.linspace(self.alpha, self.beta, self.n + 2)

    @property
    def interior(self):
        return self.x[1:-1]


def _bands(problem: Problem, grid: Grid, shift=None):
    xi, h = grid.interior, grid.h
    b, c = problem.b(xi), problem.c(xi)
    lower = -1.0 / h**2 - b / (2 * h)
    upper = -1.0 / h**2 + b / (2 * h)
    diag = 2.0 / h**2 + c
    if shift is not None:
        diag = diag + shift
    return lower, diag, upper


def _banded(lower, diag, upper):
    ab = np.zeros((3, len(diag)))
    ab[0, 1:] = upper[:-1]
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    return ab


def apply_operator(problem: Problem, grid: Grid, full):
    """Discrete ``-u'' + b u' + c u`` at interior nodes; ``full`` includes the ends."""
    lower, diag, upper = _bands(problem, grid)
    return lower * full[:-2] + diag * full[1:-1] + upper * full[2:]


def _rhs_values(rhs, grid):
    if callable(rhs):
        return np.asarray(rhs(grid.interior), dtype=float)
    return np.broadcast_to(np.asarray(rhs, dtype=float), (grid.n,)).copy()


def solve_linear(problem: Problem, rhs, grid: Grid | None = None, shift=None):
    """Interior values of ``L u = rhs``, ``u = 0`` at both ends."""
    grid = grid or Grid.for_problem(problem)
    ab = _banded(*_bands(problem, grid, shift))
    return solve_banded((1, 1), ab, _rhs_values(rhs, grid))


def _samples(obj, x):
    if obj is None:
        return None
    if hasattr(obj, "sample"):
        return np.asarray(obj.sample(x), dtype=float)
    if callable(obj):
        return np.asarray(obj(x), dtype=float)
    return np.asarray(obj, dtype=float)


@dataclass
class SolveResult:
    grid: Grid
    u: np.ndarray  # all nodes, zero at the ends
    residual_inf: float
    iterations: int
    newton_steps: int
    monotone_trace: list = field(default_factory=list)
    problem: Problem | None = None
    rhs_fn: Callable | None = None
    notes: dict = field(default_factory=dict)

    @property
    def x(self):
        return self.grid.x

    @property
    def min_interior(self):
        return float(np.min(self.u[1:-1]))

    @property
    def sup(self):
        return float(np.max(self.u))

    def Lu(self):
        return apply_operator(self.problem, self.grid, self.u)

    def rhs(self):
        return self.rhs_fn(self.u[1:-1])

    def rows(self):
        """``x, u, Lu, rhs, residual`` at every interior node."""
        Lu, r = self.Lu(), self.rhs()
        return np.column_stack([self.grid.interior, self.u[1:-1], Lu, r, Lu - r])


def _power_rhs(problem: Problem, grid: Grid):
    m = problem.m(grid.interior)
    p = problem.p
    return lambda u: m * np.power(np.maximum(u, 0.0), p)


def _newton(problem, grid, u, rhs, drhs, tol=NEWTON_TOL, max_steps=50):
    """Newton on ``A u = rhs(u)``; returns ``(u, steps)`` or ``(None, steps)``."""
    lower, diag, upper = _bands(problem, grid)
    full = np.concatenate([[0.0], u, [0.0]])
    res = np.max(np.abs(apply_operator(problem, grid, full) - rhs(u)))
    for step in range(1, max_steps + 1):
        F = apply_operator(problem, grid, full) - rhs(u)
        J = _banded(lower, diag - drhs(u), upper)
        du = solve_banded((1, 1), J, -F)
        t = 1.0
        while t > 1e-4:
            trial = u + t * du
            if np.all(trial > 0):
                tf = np.concatenate([[0.0], trial, [0.0]])
                tres = np.max(np.abs(apply_operator(problem, grid, tf) - rhs(trial)))
                if tres < res or tres <= tol:
                    break
            t /= 2
        else:
            return None, step
        u, full, res = trial, tf, tres
        if res <= tol:
            return u, step
    return None, max_steps


def _finish(problem, grid, u, rhs, drhs, it, trace, polish, scale_tol):
    steps = 0
    if polish:
        polished, steps = _newton(problem, grid, u, rhs, drhs, tol=scale_tol)
        if polished is not None:
            u = polished
    full = np.concatenate([[0.0], u, [0.0]])
    res = float(np.max(np.abs(apply_operator(problem, grid, full) - rhs(u))))
    return SolveResult(grid, full, res, it, steps, trace, problem, rhs)


def solve_sublinear(problem: Problem, lower, upper=None, grid: Grid | None = None,
                    tol=MONO_TOL, max_iter=MAX_ITER, polish=True) -> SolveResult:
    """Minimal-side solution between an ordered sub/supersolution pair.

    Each step solves ``(A + diag(Lam)) u_new = m u^p + Lam u`` with the nodewise
    shift ``Lam_i = m-_i u_i^(p-1)``; the right side is then ``m+ u^p``, which is
    nondecreasing in ``u``, so the iterates increase from ``lower``.
    """
    grid = grid or Grid.for_problem(problem)
    xi = grid.interior
    lo = _samples(lower, xi)
    hi = _samples(upper, xi)
    if lo is None or np.min(lo) <= 0:
        raise SolveError("lower must be positive at interior nodes")
    if hi is not None and np.any(lo > hi * (1 + 1e-9)):
        raise SolveError("lower and upper are not ordered")
    m = problem.m(xi)
    mplus, mminus = np.maximum(m, 0.0), np.maximum(-m, 0.0)
    p = problem.p
    lb, db, ub = _bands(problem, grid)
    rhs = _power_rhs(problem, grid)
    u = lo.copy()
    scale = float(np.max(hi)) if hi is not None else float(np.max(lo))
    slack = 1e-6 * scale
    trace = []
    for it in range(1, max_iter + 1):
        shift = mminus * u ** (p - 1)
        new = solve_banded((1, 1), _banded(lb, db + shift, ub), mplus * u**p)
        if np.min(new - u) < -slack:
            raise SolveError("iteration lost monotonicity: lower is not a subsolution")
        if hi is not None and np.max(new - hi) > slack:
            raise SolveError("iterate crossed the supersolution")
        change = float(np.max(np.abs(new - u)))
        trace.append(change)
        u = new
        if change <= tol * max(scale, 1.0):
            break
        if polish and it >= 50 and change <= 1e-6 * scale:
            break
    drhs = lambda v: p * m * np.power(v, p - 1)
    return _finish(problem, grid, u, rhs, drhs, it, trace, polish, NEWTON_TOL * max(1.0, scale))


def solve_maximal(problem: Problem, upper, grid: Grid | None = None, tol=MONO_TOL,
                  max_iter=MAX_ITER, polish=True) -> SolveResult:
    """Iterate the same monotone map downward from a supersolution."""
    grid = grid or Grid.for_problem(problem)
    xi = grid.interior
    u = _samples(upper, xi).copy()
    m = problem.m(xi)
    mplus, mminus = np.maximum(m, 0.0), np.maximum(-m, 0.0)
    p = problem.p
    lb, db, ub = _bands(problem, grid)
    scale = float(np.max(u))
    trace = []
    for it in range(1, max_iter + 1):
        shift = mminus * u ** (p - 1)
        new = solve_banded((1, 1), _banded(lb, db + shift, ub), mplus * u**p)
        new = np.maximum(new, 1e-300)
        change = float(np.max(np.abs(new - u)))
        trace.append(change)
        u = new
        if change <= tol * scale or (polish and it >= 50 and change <= 1e-6 * scale):
            break
    if np.max(u) <= 1e-8 * scale:
        raise SolveError("downward iteration collapsed to zero")
    drhs = lambda v: p * m * np.power(v, p - 1)
    return _finish(problem, grid, u, _power_rhs(problem, grid), drhs, it, trace, polish,
                   NEWTON_TOL * max(1.0, scale))


# ---------------------------------------------------------------------------
# certified pipeline


def solve_certified(certificate, grid: Grid | None = None, n=DEFAULT_NODES,
                    tol=MONO_TOL) -> SolveResult:
    """Solve the certified problem starting from its explicit subsolution."""
    from .certify import puf_problem
    from .construct import build_supersolution, construct

    problem = certificate.problem
    grid = grid or Grid.for_problem(problem, n)
    spec = construct(certificate)
    s = spec.scaled_to_original()
    lower = s * spec.sample(grid.interior)
    if certificate.witness.name == "puf":
        aux, scale = puf_problem(problem)
        up = build_supersolution(aux, n)
        w = solve_sublinear(aux, lower, up.sample(grid.interior), grid, tol)
        # w <= 1 solves the auxiliary problem, hence is a subsolution for scale * m
        weighted = problem.with_(m=problem.m.scaled(scale))
        sup = build_supersolution(weighted, n)
        v = solve_sublinear(weighted, w.u[1:-1], sup.sample(grid.interior), grid, tol)
        f = scale ** (-1.0 / (1.0 - problem.p))
        u = f * v.u[1:-1]
        sup_orig = build_supersolution(problem, n)
        result = solve_sublinear(problem, u, sup_orig.sample(grid.interior), grid, tol)
    else:
        sup = build_supersolution(problem, n)
        result = solve_sublinear(problem, lower, sup.sample(grid.interior), grid, tol)
    result.notes.update(condition=certificate.witness.name, tau=spec.tau)
    return result


# ---------------------------------------------------------------------------
# exponent lifting


@dataclass
class LiftResult:
    values: np.ndarray
    gamma: float
    q: float
    max_violation: float
    threshold: float

    @property
    def passed(self):
        return self.max_violation <= self.threshold


def lift_exponent(result: SolveResult, q) -> LiftResult:
    """``u^gamma`` with ``gamma = (1-p)/(1-q)`` is a subsolution for ``(q, gamma m)``."""
    problem = result.problem
    p = problem.p
    if not p <= q < 1:
        raise ValueError("q must lie in [p, 1)")
    gamma = (1.0 - p) / (1.0 - q)
    v = np.power(result.u, gamma)
    Lv = apply_operator(problem, result.grid, v)
    m = problem.m(result.grid.interior)
    viol = Lv - gamma * m * np.power(v[1:-1], q)
    return LiftResult(v, gamma, q, float(np.max(viol)),
                      1e-8 * (1.0 + gamma * float(np.max(np.abs(m)))))


# ---------------------------------------------------------------------------
# threshold exponent


@dataclass
class PStarResult:
    exists_edge: float | None  # smallest probed p with a certified Exists
    not_exists_edge: float | None  # largest probed p with a certified NotExists
    probes: list
    note: str = ""

    @property
    def bracket(self):
        if self.exists_edge is None or self.not_exists_edge is None:
            return None
        return (self.not_exists_edge, self.exists_edge)

    @property
    def width(self):
        b = self.bracket
        return None if b is None else b[1] - b[0]


def pstar_search(problem: Problem, tol_p=0.02, max_steps=40, certify_fn=None,
                 p_lo=1e-3, p_hi=1 - 1e-3) -> PStarResult:
    """Bracket the exponent where existence switches on.

    Certified Exists is monotone increasing in ``p`` and certified NotExists is
    monotone decreasing, so each edge is found by its own bisection; the
    region between them is where neither certificate applies.
    """
    from .certify import Verdict, certify

    certify_fn = certify_fn or certify
    probes = []

    def verdict(p):
        v = certify_fn(problem.with_(p=p)).verdict
        probes.append((p, v.value))
        return v

    verdict(p_hi)
    verdict(p_lo)

    def edge(flag):
        # largest probe with verdict != flag below the smallest probe with == flag
        # (Exists edge), or the mirror image for the NotExists edge
        hits = sorted(p for p, v in probes if (v == flag.value))
        miss = sorted(p for p, v in probes if v != flag.value)
        if flag == Verdict.EXISTS:
            b = hits[0] if hits else None
            a = max((p for p in miss if b is None or p < b), default=None)
            return a, b
        a = hits[-1] if hits else None
        b = min((p for p in miss if a is None or p > a), default=None)
        return a, b

    for flag in (Verdict.EXISTS, Verdict.NOT_EXISTS):
        while len(probes) < max_steps:
            a, b = edge(flag)
            if a is None or b is None or b - a <= tol_p / 4:
                break
            verdict(0.5 * (a + b))
    ex = edge(Verdict.EXISTS)[1]
    nx = edge(Verdict.NOT_EXISTS)[0]
    if ex is not None and ex <= p_lo:
        return PStarResult(ex, nx, probes, "exists down to the smallest probe")
    res = PStarResult(ex, nx, probes)
    if res.width is not None and res.width > tol_p:
        res.note = "certificates leave a gap wider than the requested tolerance"
    return res


# ---------------------------------------------------------------------------
# general nonlinearity


@dataclass
class NonlinearitySpec:
    f: Callable
    k1: float
    k2: float
    k3: float
    q: float
    p: float
    df: Callable | None = None
    label: str = "f"

    def derivative(self, x):
        if self.df is not None:
            return self.df(x)
        h = 1e-7 * np.maximum(np.abs(x), 1e-8)
        return (self.f(x + h) - self.f(np.maximum(x - h, 0.0))) / (h + np.minimum(x, h))


def check_growth(spec: NonlinearitySpec, k_under, k_over, samples=2001):
    """Sampled check of the two-sided power bounds near zero and the growth cap."""
    xs = np.linspace(0.0, k_under, samples)[1:]
    f = spec.f(xs)
    low = np.all(f >= spec.k1 * xs**spec.p * (1 - 1e-12))
    high = np.all(f <= spec.k2 * xs**spec.p * (1 + 1e-12))
    ys = np.linspace(k_over, 10 * k_over, samples)
    cap = np.all(spec.f(ys) <= spec.k3 * ys**spec.q * (1 + 1e-12))
    return {"lower_power": bool(low), "upper_power": bool(high), "growth": bool(cap)}


def solve_general_f(problem: Problem, spec: NonlinearitySpec, n=DEFAULT_NODES,
                    max_iter=MAX_ITER) -> SolveResult:
    """Positive solution of ``L u = m f(u)`` via the comparison problem.

    The lower function is a positive solution of ``L u = (k1 m+ - k2 m-) u^p``,
    the upper function ``k (phi + 1)`` with ``L phi = m+``.
    """
    from .calculus import apriori_integral, tables
    from .certify import Verdict, certify
    from .construct import build_supersolution

    p, q = spec.p, spec.q
    problem = problem.with_(p=p)
    t = tables(problem)
    Jp = apriori_integral(problem).value
    k_under = (spec.k1 * Jp) ** (1.0 / (1.0 - p))
    grid = Grid.for_problem(problem, n)
    xi = grid.interior
    phi = solve_linear(problem, t.decomp.m_plus, grid)
    phi_sup = float(np.max(phi))
    k_over = max((spec.k2 * Jp) ** (1.0 / (1.0 - p)),
                 (spec.k3 * (phi_sup + 1.0) ** q) ** (1.0 / (1.0 - q)))
    growth = check_growth(spec, max(k_under, k_over), k_over)
    if not all(growth.values()):
        raise SolveError(f"nonlinearity violates its growth bounds: {growth}")

    weight = t.decomp.m_plus.scaled(spec.k1) - t.decomp.m_minus.scaled(spec.k2)
    comparison = problem.with_(m=weight)
    cert = certify(comparison)
    sup_cmp = build_supersolution(comparison, n)
    if cert.verdict == Verdict.EXISTS:
        low = solve_certified(cert, grid, n)
        source = f"certified ({cert.witness.name})"
    else:
        low = solve_maximal(comparison, sup_cmp.sample(xi), grid)
        source = "maximal solution of the comparison problem"
    if low.min_interior <= 0:
        raise SolveError("comparison problem has no positive discrete solution")
    lower = low.u[1:-1]
    k = max(k_over, k_under, float(np.max(lower)))
    upper = k * (phi + 1.0)
    if np.any(lower > upper):
        raise SolveError("lower and upper functions are not ordered")

    m = problem.m(xi)
    top = float(np.max(upper))
    rhs = lambda v: m * spec.f(np.maximum(v, 0.0))
    drhs = lambda v: m * spec.derivative(np.maximum(v, 1e-300))
    # Lipschitz bound of f on [delta, top], sampled on a log grid
    probe = np.geomspace(max(np.min(lower), 1e-300), top, 4000)
    lip = np.abs(spec.derivative(probe))
    tail_sup = np.maximum.accumulate(lip[::-1])[::-1]
    lb, db, ub = _bands(problem, grid)
    u = lower.copy()
    trace = []
    for it in range(1, max_iter + 1):
        L = np.abs(m) * np.interp(u, probe, tail_sup)
        new = solve_banded((1, 1), _banded(lb, db + L, ub), rhs(u) + L * u)
        change = float(np.max(np.abs(new - u)))
        trace.append(change)
        u = np.clip(new, lower, upper)
        if change <= 1e-6 * top and it >= 5:
            break
    result = _finish(problem, grid, u, rhs, drhs, it, trace, True, NEWTON_TOL * max(1.0, top))
    result.notes.update(lower_source=source, k_over=k, growth=growth)
    return result


def named_nonlinearity(kind: str) -> NonlinearitySpec:
    """Examples available from the command line."""
    if kind == "sqrt_sin10":
        f = lambda x: np.sqrt(x) * (1.0 + 0.5 * np.sin(10.0 * x))
        df = lambda x: (0.5 / np.sqrt(x) * (1.0 + 0.5 * np.sin(10.0 * x))
                        + 5.0 * np.sqrt(x) * np.cos(10.0 * x))
        return NonlinearitySpec(f, 0.5, 1.5, 1.5, 0.5, 0.5, df, kind)
    if kind == "power":
        return NonlinearitySpec(np.sqrt, 1.0, 1.0, 1.0, 0.5, 0.5,
                                lambda x: 0.5 / np.sqrt(x), kind)
    raise ValueError(f"unknown nonlinearity {kind!r}")
