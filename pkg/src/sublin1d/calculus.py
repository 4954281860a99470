"""Quadrature, integrating factors and the scalar constants built from them.

Nested integrals go through :class:`CellGrid`: the interval is split into
cells whose edges include every coefficient breakpoint and every sign change
of the weight, and each integrand is represented on a cell by its degree-7
Legendre interpolant at the Gauss nodes. Cumulative integrals are then exact
antiderivatives of those interpolants, so they can be evaluated anywhere.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from numpy.polynomial import legendre as Leg

from .model import Problem, WeightDecomposition, decompose_weight

# Gauss-Kronrod 7/15 abscissae and weights (QUADPACK qk15).
_XGK = np.array([
    0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
    0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
    0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
    0.207784955007898467600689403773245, 0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
    0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
    0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
    0.204432940075298892414161999234649, 0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
    0.381830050505118944950369775488975, 0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_KW = np.concatenate([_WGK[:-1], _WGK[::-1]])
# Gauss points are the odd-indexed Kronrod points.
_GW = np.zeros(15)
_GW[[1, 3, 5, 13, 11, 9]] = np.concatenate([_WG[:3], _WG[:3]])
_GW[7] = _WG[3]

MAX_PANELS = 10**6
DEFAULT_TOL = 1e-10
CELLS = 2048
ORDER = 8  # Gauss points per cell; CELLS * ORDER = 2**14 table nodes


class QuadratureError(RuntimeError):
    def __init__(self, msg, value, error):
        super().__init__(f"{msg}: best value {value!r}, error estimate {error:.3g}")
        self.value = value
        self.error = error


@dataclass(frozen=True)
class QuadResult:
    value: float
    error: float
    panels: int = 1


def _gk15(f, lo, hi):
    half = 0.5 * (hi - lo)
    vals = np.asarray(f(lo + half * (_NODES + 1.0)), dtype=float)
    k = half * float(_KW @ vals)
    g = half * float(_GW @ vals)
    return k, abs(k - g)


def integrate(f, lo, hi, tol=DEFAULT_TOL, breakpoints=(), max_panels=MAX_PANELS) -> QuadResult:
    """Adaptive Gauss-Kronrod (7/15) quadrature of a vectorised ``f``.

    Panels never straddle a point of ``breakpoints``. The reported error is
    the sum of per-panel ``|K15 - G7|`` estimates.
    """
    if hi == lo:
        return QuadResult(0.0, 0.0, 0)
    if hi < lo:
        r = integrate(f, hi, lo, tol, breakpoints, max_panels)
        return QuadResult(-r.value, r.error, r.panels)
    edges = sorted({lo, hi, *(t for t in breakpoints if lo < t < hi)})
    heap = []
    total = err = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        v, e = _gk15(f, a, b)
        heapq.heappush(heap, (-e, a, b, v))
        total += v
        err += e
    while err > tol:
        if len(heap) >= max_panels:
            raise QuadratureError("tolerance unreachable", total, err)
        e, a, b, v = heapq.heappop(heap)
        mid = 0.5 * (a + b)
        if not a < mid < b:
            raise QuadratureError("panel width underflow", total, err)
        v1, e1 = _gk15(f, a, mid)
        v2, e2 = _gk15(f, mid, b)
        total += v1 + v2 - v
        err += e1 + e2 + e
        heapq.heappush(heap, (-e1, a, mid, v1))
        heapq.heappush(heap, (-e2, mid, b, v2))
    return QuadResult(total, err, len(heap))


# ---------------------------------------------------------------------------
# cell tables

_T, _W = Leg.leggauss(ORDER)
_V = Leg.legvander(_T, ORDER - 1)  # (ORDER, ORDER)
_FWD = (_V * _W[:, None]).T * ((2 * np.arange(ORDER) + 1) / 2.0)[:, None]


# legint(., lbnd=-1) is linear; apply it to the unit series once
_INT = np.array([Leg.legint(np.eye(ORDER)[k], lbnd=-1) for k in range(ORDER)]).T


class CellPoly:
    """Continuous piecewise polynomial stored as per-cell Legendre series."""

    def __init__(self, edges, coef, offsets):
        self.edges = edges
        self.coef = coef
        self.offsets = offsets

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        xf = np.atleast_1d(x)
        e = self.edges
        idx = np.clip(np.searchsorted(e, xf, side="right") - 1, 0, len(e) - 2)
        l, r = e[idx], e[idx + 1]
        t = np.clip(2.0 * (xf - l) / (r - l) - 1.0, -1.0, 1.0)
        V = Leg.legvander(t, self.coef.shape[1] - 1)
        out = self.offsets[idx] + np.einsum("ij,ij->i", V, self.coef[idx])
        return out[0] if x.ndim == 0 else out


class CellGrid:
    def __init__(self, edges):
        self.edges = np.asarray(edges, dtype=float)
        self.h = np.diff(self.edges)
        mid = 0.5 * (self.edges[:-1] + self.edges[1:])
        self.nodes = mid[:, None] + 0.5 * self.h[:, None] * _T[None, :]
        self.weights = 0.5 * self.h[:, None] * _W[None, :]

    @classmethod
    def covering(cls, alpha, beta, points=(), cells=CELLS):
        knots = sorted({alpha, beta, *(t for t in points if alpha < t < beta)})
        edges = [alpha]
        for l, r in zip(knots[:-1], knots[1:]):
            k = max(1, math.ceil(cells * (r - l) / (beta - alpha)))
            edges.extend(np.linspace(l, r, k + 1)[1:])
        return cls(edges)

    def sample(self, f):
        return np.asarray(f(self.nodes.ravel()), dtype=float).reshape(self.nodes.shape)

    def legendre(self, vals):
        return vals @ _FWD.T

    def error_estimate(self, vals):
        a = self.legendre(vals)
        return float(np.sum(0.5 * self.h * (np.abs(a[:, -1]) + np.abs(a[:, -2]))))

    def integral(self, vals) -> QuadResult:
        return QuadResult(float(np.sum(self.weights * vals)), self.error_estimate(vals),
                          len(self.h))

    def cumulative(self, vals) -> CellPoly:
        a = self.legendre(vals) * (0.5 * self.h)[:, None]
        anti = a @ _INT.T
        cell_totals = np.sum(self.weights * vals, axis=1)
        offsets = np.concatenate([[0.0], np.cumsum(cell_totals)[:-1]])
        return CellPoly(self.edges, anti, offsets)


@dataclass
class CumulativeFactor:
    """``Bbar(x) = exp(int_alpha^x b)`` and ``Bunder = 1 / Bbar``."""

    grid: np.ndarray
    Bbar_values: np.ndarray
    Bunder_values: np.ndarray
    integral_b: CellPoly
    error: float

    def Bbar(self, x):
        return np.exp(self.integral_b(x))

    def Bunder(self, x):
        return np.exp(-self.integral_b(x))

    def sup_Bbar(self, lo, hi):
        return self._sup(lo, hi, 1.0)

    def sup_Bunder(self, lo, hi):
        return self._sup(lo, hi, -1.0)

    def _sup(self, lo, hi, sign):
        g = self.grid
        inside = g[(g > lo) & (g < hi)]
        pts = np.concatenate([[lo, hi], inside, np.linspace(lo, hi, 65)])
        return float(np.max(np.exp(sign * self.integral_b(pts))))


def exp_factors(problem: Problem, grid: CellGrid | None = None) -> CumulativeFactor:
    """Integrating factors of the drift, cell by cell."""
    grid = grid or CellGrid.covering(problem.alpha, problem.beta, problem.breakpoints)
    bvals = grid.sample(problem.b)
    ib = grid.cumulative(bvals)
    at_edges = ib(grid.edges)
    return CumulativeFactor(grid.edges, np.exp(at_edges), np.exp(-at_edges), ib,
                            grid.error_estimate(bvals))


class Tables:
    """Shared cumulative tables for one problem."""

    def __init__(self, problem: Problem, cells=CELLS):
        self.problem = problem
        self.decomp: WeightDecomposition = decompose_weight(problem.m)
        pts = set(problem.breakpoints) | set(self.decomp.m.breakpoints)
        self.grid = CellGrid.covering(problem.alpha, problem.beta, pts, cells)
        self.factors = exp_factors(problem, self.grid)

    @cached_property
    def bbar(self):
        return np.exp(self.factors.integral_b(self.grid.nodes.ravel())).reshape(
            self.grid.nodes.shape)

    @cached_property
    def bunder(self):
        return 1.0 / self.bbar

    def _cum(self, vals):
        return self.grid.cumulative(vals), self.grid.error_estimate(vals)

    @cached_property
    def Q(self):
        """``int_alpha^x Bbar``."""
        return self._cum(self.bbar)

    @cached_property
    def Gplus(self):
        """``int_alpha^x m_plus Bunder``."""
        return self._cum(self.grid.sample(self.decomp.m_plus) * self.bunder)

    @cached_property
    def Gminus(self):
        """``int_alpha^x m_minus Bunder``."""
        return self._cum(self.grid.sample(self.decomp.m_minus) * self.bunder)

    @cached_property
    def Cunder(self):
        """``int_alpha^x c Bunder``."""
        return self._cum(self.grid.sample(self.problem.c) * self.bunder)

    @cached_property
    def S(self):
        return self._cum(self.bunder**2)

    def nested(self, inner, reverse=False):
        """Cumulative of ``Bbar(x) * inner(x)`` (or of the tail ``inner(beta) - inner(x)``)."""
        poly, err = inner
        vals = poly(self.grid.nodes.ravel()).reshape(self.grid.nodes.shape)
        if reverse:
            vals = poly(self.problem.beta) - vals
        return self._cum(self.bbar * vals)


@lru_cache(maxsize=32)
def tables(problem: Problem) -> Tables:
    return Tables(problem)


def cp(p: float) -> float:
    """``2(1+p)/(1-p)^2``."""
    return 2.0 * (1.0 + p) / (1.0 - p) ** 2


def apriori_integral(problem: Problem, factors=None) -> QuadResult:
    """``int_alpha^beta Bbar(x) || m_plus Bunder ||_{L1(alpha, x)} dx``."""
    t = tables(problem)
    poly, err = t.nested(t.Gplus)
    return QuadResult(float(poly(problem.beta)), err + t.Gplus[1])


@dataclass(frozen=True)
class DerivedConstants:
    Cp: float
    J_plus: float
    gamma: float
    gamma_b: float
    M_script: float
    K_b: float
    Bunder_sup: float
    mminus_sup: float
    c_sup: float
    quadrature_error: float
    interval: tuple
    fingerprint: str


def derived_constants(problem: Problem, interval) -> DerivedConstants:
    x0, x1 = interval
    al, be = problem.alpha, problem.beta
    t = tables(problem)
    Q, qerr = t.Q
    J = apriori_integral(problem)
    right, e1 = t.nested(t.Gminus, reverse=True)
    left, e2 = t.nested(t.Gminus)
    M = max(float(right(be) - right(x0)), float(left(x1)))
    S, serr = t.S
    # sqrt(S) ~ sqrt(x - alpha) at the left end; let the adaptive rule grade it
    kb = integrate(lambda x: t.factors.Bbar(x) * np.sqrt(np.maximum(S(x), 0.0)),
                   al, be, tol=1e-13, breakpoints=problem.breakpoints)
    gamma_b = max(float(Q(x1) - Q(al)), float(Q(be) - Q(x0)))
    return DerivedConstants(
        Cp=cp(problem.p),
        J_plus=J.value,
        gamma=max(be - x0, x1 - al),
        gamma_b=gamma_b,
        M_script=M,
        K_b=kb.value,
        Bunder_sup=t.factors.sup_Bunder(al, be),
        mminus_sup=max(0.0, -problem.m.extremum(kind="min")),
        c_sup=problem.c.sup_norm(),
        quadrature_error=J.error + e1 + e2 + t.Gminus[1] + qerr + kb.error + serr,
        interval=(x0, x1),
        fingerprint=problem.fingerprint(),
    )


def sup_ratio(num, den, lo, hi):
    """``sup num/den`` on ``[lo, hi]``, or ``None`` when ``den`` is not positive there."""
    a = num.refine(den.breakpoints)
    d = den.refine(a.breakpoints)
    a = a.refine(d.breakpoints)
    best = -np.inf
    for (l, r, pn), (_, _, pd) in zip(a.segments(lo, hi), d.segments(lo, hi)):
        from .model import Coefficient, CallablePiece

        dc = Coefficient((l, r), (pd,))
        if dc.extremum(kind="min") <= 0:
            return None
        ratio = Coefficient((l, r), (CallablePiece(lambda x, pn=pn, pd=pd: pn(x) / pd(x)),))
        best = max(best, ratio.extremum(kind="max"))
    return best


@dataclass(frozen=True)
class AprioriBound:
    inerte: float
    dudu: float | None
    bound: float
    J_plus: float


def plus_ratio_sup(problem: Problem):
    """``sup_{M+} m_plus / c`` or ``None`` when ``c`` vanishes somewhere on ``M+``."""
    t = tables(problem)
    best = 0.0
    for lo, hi in t.decomp.plus_region:
        r = sup_ratio(t.decomp.m_plus, problem.c, lo, hi)
        if r is None:
            return None
        best = max(best, r)
    return best if t.decomp.plus_region else None


def apriori_bound(problem: Problem) -> AprioriBound:
    """Sup-norm ceiling for nonnegative subsolutions."""
    J = apriori_integral(problem).value
    e = 1.0 / (1.0 - problem.p)
    inerte = max(J, 0.0) ** e
    r = plus_ratio_sup(problem)
    dudu = None if r is None else r**e
    bound = inerte if dudu is None else min(inerte, dudu)
    return AprioriBound(inerte, dudu, bound, J)
