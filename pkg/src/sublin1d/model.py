"""Problem data: piecewise coefficients, the Dirichlet problem, weight splitting."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq, minimize_scalar

SIGN_TOL = 1e-12
RESAMPLE_POINTS = 4096


class ProblemError(ValueError):
    """Input data violates a structural requirement of the problem."""


# ---------------------------------------------------------------------------
# pieces


@dataclass(frozen=True)
class Term:
    """``amplitude * kind(frequency * x)`` with kind in sin, cos, exp."""

    kind: str
    amplitude: float
    frequency: float

    def __post_init__(self):
        if self.kind not in ("sin", "cos", "exp"):
            raise ProblemError(f"unknown term kind {self.kind!r}")

    def derivative(self, x, order=0):
        a, w = self.amplitude, self.frequency
        if self.kind == "exp":
            return a * w**order * np.exp(w * x)
        # sin(wx + order*pi/2) is the order-th derivative of sin
        shift = order * np.pi / 2 + (np.pi / 2 if self.kind == "cos" else 0.0)
        return a * w**order * np.sin(w * x + shift)


@dataclass(frozen=True)
class ClosedPiece:
    """Polynomial in absolute x plus a sum of sin/cos/exp terms."""

    poly: tuple = ()
    terms: tuple = ()

    def derivative(self, x, order=0):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        if self.poly:
            c = np.asarray(self.poly, dtype=float)
            if order:
                c = P.polyder(c, order)
            out = out + P.polyval(x, c)
        for t in self.terms:
            out = out + t.derivative(x, order)
        return out

    def __call__(self, x):
        return self.derivative(x, 0)

    @property
    def is_zero(self):
        return not any(self.poly) and all(t.amplitude == 0 for t in self.terms)

    @property
    def is_constant(self):
        return not self.terms and not any(self.poly[1:])

    def scaled(self, s):
        return ClosedPiece(
            tuple(s * v for v in self.poly),
            tuple(Term(t.kind, s * t.amplitude, t.frequency) for t in self.terms),
        )


ZERO = ClosedPiece()


@dataclass(frozen=True)
class SampledPiece:
    """Cubic-spline interpolant of samples; derivatives come from the spline."""

    xs: tuple
    ys: tuple

    @cached_property
    def _spline(self):
        return CubicSpline(np.asarray(self.xs), np.asarray(self.ys))

    def derivative(self, x, order=0):
        return self._spline(np.asarray(x, dtype=float), order)

    def __call__(self, x):
        return self.derivative(x, 0)

    @property
    def is_zero(self):
        return not any(self.ys)

    @property
    def is_constant(self):
        return False

    def scaled(self, s):
        return SampledPiece(self.xs, tuple(s * v for v in self.ys))


@dataclass(frozen=True, eq=False)
class CallablePiece:
    """Arbitrary vectorised callable, e.g. a manufactured weight.

    Missing derivatives are taken from five-point central differences.
    """

    func: Callable
    d1: Callable | None = None
    d2: Callable | None = None
    label: str = "callable"

    def derivative(self, x, order=0):
        x = np.asarray(x, dtype=float)
        if order == 0:
            return np.asarray(self.func(x), dtype=float) + 0.0 * x
        exact = self.d1 if order == 1 else self.d2 if order == 2 else None
        if exact is not None:
            return np.asarray(exact(x), dtype=float) + 0.0 * x
        h = 1e-3 * max(1.0, float(np.max(np.abs(x)))) if x.size else 1e-3
        f = self.func
        if order == 1:
            return (f(x - 2 * h) - 8 * f(x - h) + 8 * f(x + h) - f(x + 2 * h)) / (12 * h)
        if order == 2:
            return (-f(x - 2 * h) + 16 * f(x - h) - 30 * f(x) + 16 * f(x + h)
                    - f(x + 2 * h)) / (12 * h * h)
        raise ValueError("only derivatives up to order 2 are available")

    def __call__(self, x):
        return self.derivative(x, 0)

    is_zero = False
    is_constant = False

    def scaled(self, s):
        return CompositePiece(((s, self),))


@dataclass(frozen=True)
class CompositePiece:
    """Linear combination of other pieces."""

    parts: tuple  # of (weight, piece)

    def derivative(self, x, order=0):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        for w, pc in self.parts:
            out = out + w * pc.derivative(x, order)
        return out

    def __call__(self, x):
        return self.derivative(x, 0)

    @property
    def is_zero(self):
        return all(w == 0 or pc.is_zero for w, pc in self.parts)

    is_constant = False

    def scaled(self, s):
        return CompositePiece(tuple((s * w, pc) for w, pc in self.parts))


def add_pieces(p, q):
    if p.is_zero:
        return q
    if q.is_zero:
        return p
    if isinstance(p, ClosedPiece) and isinstance(q, ClosedPiece):
        n = max(len(p.poly), len(q.poly))
        a = np.zeros(n)
        a[: len(p.poly)] += p.poly
        a[: len(q.poly)] += q.poly
        return ClosedPiece(tuple(float(v) for v in a), p.terms + q.terms)
    return CompositePiece(((1.0, p), (1.0, q)))


# ---------------------------------------------------------------------------
# coefficients


@dataclass(frozen=True)
class Coefficient:
    """Piecewise function on ``[breakpoints[0], breakpoints[-1]]``.

    A point sitting exactly on an interior breakpoint is evaluated with the
    piece to its right.
    """

    breakpoints: tuple
    pieces: tuple

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        if len(bp) != len(self.pieces) + 1:
            raise ProblemError("need one more breakpoint than pieces")
        if np.any(np.diff(bp) <= 0):
            raise ProblemError("breakpoints must be strictly increasing")

    @classmethod
    def constant(cls, value, alpha, beta):
        return cls((float(alpha), float(beta)), (ClosedPiece((float(value),)),))

    @classmethod
    def from_callable(cls, func, alpha, beta, d1=None, d2=None, label="callable"):
        return cls((float(alpha), float(beta)), (CallablePiece(func, d1, d2, label),))

    @property
    def alpha(self):
        return self.breakpoints[0]

    @property
    def beta(self):
        return self.breakpoints[-1]

    def piece_index(self, x):
        bp = np.asarray(self.breakpoints)
        idx = np.searchsorted(bp, x, side="right") - 1
        return np.clip(idx, 0, len(self.pieces) - 1)

    def derivative(self, x, order=0):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        xf = np.atleast_1d(x)
        idx = self.piece_index(xf)
        out = np.empty_like(xf)
        for k in np.unique(idx):
            sel = idx == k
            out[sel] = self.pieces[k].derivative(xf[sel], order)
        return out[0] if scalar else out

    def __call__(self, x):
        return self.derivative(x, 0)

    @property
    def is_zero(self):
        return all(pc.is_zero for pc in self.pieces)

    @property
    def is_piecewise_constant(self):
        return all(pc.is_constant or pc.is_zero for pc in self.pieces)

    def refine(self, points) -> "Coefficient":
        """Same function with extra breakpoints inserted."""
        bp = np.asarray(self.breakpoints)
        extra = [float(t) for t in points
                 if bp[0] < t < bp[-1] and np.min(np.abs(bp - t)) > 0]
        if not extra:
            return self
        new_bp = np.unique(np.concatenate([bp, extra]))
        mids = 0.5 * (new_bp[:-1] + new_bp[1:])
        idx = self.piece_index(mids)
        return Coefficient(tuple(float(v) for v in new_bp),
                           tuple(self.pieces[i] for i in idx))

    def scaled(self, s) -> "Coefficient":
        return Coefficient(self.breakpoints, tuple(pc.scaled(s) for pc in self.pieces))

    def __neg__(self):
        return self.scaled(-1.0)

    def __add__(self, other: "Coefficient") -> "Coefficient":
        if not np.isclose(self.alpha, other.alpha) or not np.isclose(self.beta, other.beta):
            raise ProblemError("coefficients live on different intervals")
        a = self.refine(other.breakpoints)
        b = other.refine(a.breakpoints)
        return Coefficient(a.breakpoints,
                           tuple(add_pieces(p, q) for p, q in zip(a.pieces, b.pieces)))

    def __sub__(self, other):
        return self + (-other)

    def segments(self, lo=None, hi=None):
        """Yield ``(left, right, piece)`` for pieces overlapping ``[lo, hi]``."""
        lo = self.alpha if lo is None else lo
        hi = self.beta if hi is None else hi
        for k, pc in enumerate(self.pieces):
            l, r = max(self.breakpoints[k], lo), min(self.breakpoints[k + 1], hi)
            if r > l:
                yield l, r, pc

    def extremum(self, lo=None, hi=None, kind="max", samples=257):
        """Essential sup (or inf) over ``[lo, hi]``, taking each piece on its closure."""
        sgn = 1.0 if kind == "max" else -1.0
        best = -np.inf
        for l, r, pc in self.segments(lo, hi):
            if pc.is_zero:
                best = max(best, 0.0)
                continue
            if isinstance(pc, ClosedPiece) and pc.is_constant:
                best = max(best, sgn * float(pc.poly[0]) if pc.poly else 0.0)
                continue
            xs = np.linspace(l, r, samples)
            vals = sgn * pc(xs)
            j = int(np.argmax(vals))
            best = max(best, float(vals[j]))
            a, b = xs[max(j - 1, 0)], xs[min(j + 1, samples - 1)]
            if b > a:
                res = minimize_scalar(lambda t: -sgn * float(pc(t)), bounds=(a, b),
                                      method="bounded", options={"xatol": 1e-13})
                best = max(best, -float(res.fun))
        return sgn * best

    def sup_norm(self, lo=None, hi=None):
        return max(abs(self.extremum(lo, hi, "max")), abs(self.extremum(lo, hi, "min")))

    def describe(self):
        out = []
        for l, r, pc in self.segments():
            if isinstance(pc, ClosedPiece):
                d = {"range": [l, r], "poly": list(pc.poly)}
                if pc.terms:
                    d["trig"] = [{"kind": t.kind, "amplitude": t.amplitude,
                                  "frequency": t.frequency} for t in pc.terms]
            else:
                d = {"range": [l, r], "kind": type(pc).__name__}
            out.append(d)
        return out


# ---------------------------------------------------------------------------
# problem


@dataclass(frozen=True)
class Problem:
    """``-a u'' + b u' + c u = m u^p`` on ``(alpha, beta)``, ``u = 0`` at the ends."""

    alpha: float
    beta: float
    a: Coefficient
    b: Coefficient
    c: Coefficient
    m: Coefficient
    p: float
    ellipticity_floor: float = field(default=0.0, compare=False)

    def __post_init__(self):
        if not self.alpha < self.beta:
            raise ProblemError("need alpha < beta")
        if not 0.0 < self.p < 1.0:
            raise ProblemError(f"exponent p={self.p} outside (0, 1)")
        for name in "abcm":
            coef = getattr(self, name)
            if not (np.isclose(coef.alpha, self.alpha) and np.isclose(coef.beta, self.beta)):
                raise ProblemError(f"coefficient {name} is not defined on [alpha, beta]")
        floor = self.a.extremum(kind="min")
        if not floor > 0:
            raise ProblemError(f"ellipticity floor {floor:g} is not positive")
        object.__setattr__(self, "ellipticity_floor", floor)
        if self.c.extremum(kind="min") < -1e-14:
            raise ProblemError("zeroth-order coefficient c must be nonnegative")

    @classmethod
    def simple(cls, alpha, beta, m, p, b=0.0, c=0.0, a=1.0):
        """Build a problem; numbers are promoted to constant coefficients."""

        def coef(v):
            return v if isinstance(v, Coefficient) else Coefficient.constant(v, alpha, beta)

        return cls(float(alpha), float(beta), coef(a), coef(b), coef(c), coef(m), float(p))

    def with_(self, **changes) -> "Problem":
        return replace(self, **changes)

    @property
    def breakpoints(self):
        pts = set()
        for coef in (self.a, self.b, self.c, self.m):
            pts.update(coef.breakpoints)
        return sorted(pts)

    def fingerprint(self) -> str:
        desc = repr((self.alpha, self.beta, self.p,
                     [getattr(self, n).describe() for n in "abcm"]))
        return hashlib.sha256(desc.encode()).hexdigest()[:16]


def _divide(coef: Coefficient, a: Coefficient) -> Coefficient:
    merged = coef.refine(a.breakpoints)
    aa = a.refine(merged.breakpoints)
    merged = merged.refine(aa.breakpoints)
    pieces = []
    for (l, r, pc), qa in zip(merged.segments(), aa.pieces):
        if pc.is_zero:
            pieces.append(ZERO)
        elif isinstance(qa, ClosedPiece) and qa.is_constant:
            pieces.append(pc.scaled(1.0 / qa.poly[0]))
        else:
            xs = np.linspace(l, r, RESAMPLE_POINTS)
            ys = pc(xs) / qa(xs)
            pieces.append(SampledPiece(tuple(xs.tolist()), tuple(ys.tolist())))
    return Coefficient(merged.breakpoints, tuple(pieces))


def normalize(problem: Problem) -> Problem:
    """Divide through by the leading coefficient so that ``a == 1``.

    Piecewise-constant ``a`` is divided exactly; otherwise every coefficient is
    resampled onto a 4096-point grid per piece and spline-interpolated.
    """
    a = problem.a
    if a.is_piecewise_constant and all(
            pc.is_constant and pc.poly and pc.poly[0] == 1.0 for pc in a.pieces):
        return problem
    one = Coefficient.constant(1.0, problem.alpha, problem.beta)
    return problem.with_(a=one, b=_divide(problem.b, a), c=_divide(problem.c, a),
                         m=_divide(problem.m, a))


# ---------------------------------------------------------------------------
# weight decomposition


@dataclass(frozen=True)
class WeightDecomposition:
    m: Coefficient
    m_plus: Coefficient
    m_minus: Coefficient
    plus_region: tuple  # maximal open intervals with m >= 0 (zero sets included)
    minus_region: tuple  # maximal open intervals with m < 0
    segments: tuple  # (left, right, sign) with sign in {-1, 0, 1}

    @property
    def nonpositive_region(self):
        return _merge(self.segments, lambda s: s <= 0)


def _piece_roots(pc, l, r, samples=2049):
    xs = np.linspace(l, r, samples)
    vals = pc(xs)
    roots = []
    for i in range(samples - 1):
        v0, v1 = vals[i], vals[i + 1]
        if v0 == 0.0 and 0 < i:
            roots.append(xs[i])
        elif v0 * v1 < 0:
            roots.append(brentq(lambda t: float(pc(t)), xs[i], xs[i + 1],
                                xtol=1e-15, rtol=4 * np.finfo(float).eps))
    return roots


def _segment_sign(pc, l, r):
    if pc.is_zero:
        return 0
    xs = np.linspace(l, r, 9)[1:-1]
    vals = pc(xs)
    scale = max(1.0, float(np.max(np.abs(vals))))
    big = vals[np.abs(vals) > SIGN_TOL * scale]
    if big.size == 0:
        return 0
    return 1 if big[0] > 0 else -1


def _merge(segments, pred):
    out = []
    for l, r, s in segments:
        if not pred(s):
            continue
        if out and np.isclose(out[-1][1], l, rtol=0, atol=1e-15):
            out[-1] = (out[-1][0], r)
        else:
            out.append((l, r))
    return tuple(out)


def decompose_weight(m: Coefficient) -> WeightDecomposition:
    """Split ``m = m_plus - m_minus`` and locate its sign changes (to ~1e-12)."""
    cuts = []
    for l, r, pc in m.segments():
        if not pc.is_zero:
            cuts.extend(t for t in _piece_roots(pc, l, r) if l < t < r)
    refined = m.refine(cuts)
    segs, plus, minus = [], [], []
    for l, r, pc in refined.segments():
        s = _segment_sign(pc, l, r)
        segs.append((l, r, s))
        plus.append(pc if s > 0 else ZERO)
        minus.append(pc.scaled(-1.0) if s < 0 else ZERO)
    m_plus = Coefficient(refined.breakpoints, tuple(plus))
    m_minus = Coefficient(refined.breakpoints, tuple(minus))
    segs = tuple(segs)
    return WeightDecomposition(
        m=refined, m_plus=m_plus, m_minus=m_minus,
        plus_region=_merge(segs, lambda s: s >= 0),
        minus_region=_merge(segs, lambda s: s < 0),
        segments=segs,
    )


class NoPositivityError(ProblemError):
    """``m_plus`` vanishes identically."""


def candidate_intervals(decomp: WeightDecomposition) -> list[tuple[float, float]]:
    """Maximal open intervals where ``m >= 0`` and ``m`` is not identically zero."""
    out = []
    run, positive = None, False
    for l, r, s in decomp.segments + ((np.inf, np.inf, -1),):
        if s >= 0:
            run = (l, r) if run is None else (run[0], r)
            positive = positive or s > 0
            continue
        if run is not None and positive:
            out.append(run)
        run, positive = None, False
    if not out:
        raise NoPositivityError("no positivity interval; no solution by the maximum principle")
    return out


def coefficient_from_pieces(alpha, beta, pieces: Sequence[dict]) -> Coefficient:
    """Build a coefficient from config-style piece dicts (see ``config``)."""
    if not pieces:
        raise ProblemError("a coefficient needs at least one piece")
    bps, pcs = [], []
    for d in sorted(pieces, key=lambda d: d["range"][0]):
        lo, hi = map(float, d["range"])
        if bps and not np.isclose(bps[-1], lo, rtol=0, atol=1e-14):
            raise ProblemError(f"pieces leave a gap or overlap at {bps[-1]} / {lo}")
        if not bps:
            bps.append(lo)
        bps.append(hi)
        poly = tuple(float(v) for v in d.get("poly", ()))
        if len(poly) > 6:
            raise ProblemError("polynomials are limited to degree 5")
        trig = d.get("trig")
        terms = ()
        if trig:
            trig = [trig] if isinstance(trig, dict) else trig
            terms = tuple(Term(t["kind"], float(t.get("amplitude", 1.0)),
                               float(t["frequency"])) for t in trig)
        pcs.append(ClosedPiece(poly, terms))
    if not (np.isclose(bps[0], alpha) and np.isclose(bps[-1], beta)):
        raise ProblemError("pieces must cover the whole interval")
    bps[0], bps[-1] = float(alpha), float(beta)
    return Coefficient(tuple(bps), tuple(pcs))
