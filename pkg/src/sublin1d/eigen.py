"""Principal eigenvalue of ``L u = lam m u`` on a subinterval with zero ends."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import cho_solve_banded, cholesky_banded

from .calculus import tables
from .model import Problem

DEFAULT_N = 2000
DEFAULT_TOL = 1e-8
MAX_ITER = 10_000
MAX_CELLS = 2**17


class EigenError(RuntimeError):
    pass


@dataclass
class DiscretePencil:
    """Symmetric form ``-(Bu u')' + Bu c u = lam Bu m u`` on a uniform grid.

    ``Bu c`` and ``Bu m+`` are averaged over the dual cell of each node, which
    keeps the scheme second order when ``c`` or ``m`` jump.
    """

    x: np.ndarray  # all nodes including the two ends
    h: float
    pw: np.ndarray  # Bunder at half nodes
    bu: np.ndarray  # Bunder at interior nodes
    c: np.ndarray  # dual-cell averages, divided by Bunder at the node
    m: np.ndarray

    @classmethod
    def build(cls, problem: Problem, interval, cells):
        x0, x1 = interval
        x = np.linspace(x0, x1, cells + 1)
        h = (x1 - x0) / cells
        t = tables(problem)
        half = 0.5 * (x[:-1] + x[1:])
        bu = t.factors.Bunder(x[1:-1])
        cell_c = np.diff(t.Cunder[0](half)) / h
        cell_m = np.diff(t.Gplus[0](half)) / h
        return cls(x, h, t.factors.Bunder(half), bu, cell_c / bu, cell_m / bu)

    @cached_property
    def diag(self):
        return (self.pw[:-1] + self.pw[1:]) / self.h**2 + self.bu * self.c

    @cached_property
    def off(self):
        return -self.pw[1:-1] / self.h**2

    @cached_property
    def mass(self):
        return self.bu * np.maximum(self.m, 0.0)

    def apply(self, u):
        out = self.diag * u
        out[:-1] += self.off * u[1:]
        out[1:] += self.off * u[:-1]
        return out

    def energy(self, u):
        """``u^T A u`` in difference form, free of the cancellation in ``u @ A u``."""
        du = np.diff(np.concatenate([[0.0], u, [0.0]]))
        return float(np.sum(self.pw * du**2) / self.h**2 + np.sum(self.bu * self.c * u**2))

    def operator(self, u):
        """Discrete ``-u'' + b u' + c u`` at the interior nodes."""
        return self.apply(u) / self.bu


def _inverse_iteration(pen: DiscretePencil):
    n = len(pen.diag)
    if not np.any(pen.mass > 0):
        raise EigenError("weight vanishes on the interval: no positive principal eigenvalue")
    ab = np.zeros((2, n))
    ab[0, 1:] = pen.off
    ab[1] = pen.diag
    chol = cholesky_banded(ab)
    u = np.ones(n)
    lam_old = np.inf
    for it in range(1, MAX_ITER + 1):
        y = cho_solve_banded((chol, False), pen.mass * u)
        y /= np.max(np.abs(y))
        Ay = pen.apply(y)
        lam = pen.energy(y) / float(y @ (pen.mass * y))
        resid = np.max(np.abs(Ay - lam * pen.mass * y)) / np.max(np.abs(Ay))
        if abs(lam - lam_old) <= 1e-13 * lam and resid < 1e-8:
            break
        lam_old, u = lam, y
    else:
        raise EigenError(f"inverse iteration did not converge (residual {resid:.3g})")
    if y[np.argmax(np.abs(y))] < 0:
        y = -y
    return lam, y / np.max(y), it


@dataclass
class GridFunction:
    """Samples on a grid with a cubic-spline interpolant."""

    x: np.ndarray
    values: np.ndarray

    @cached_property
    def spline(self):
        return CubicSpline(self.x, self.values)

    def __call__(self, t, order=0):
        return self.spline(t, order)


@dataclass
class EigenPair:
    lambda1: float
    u2: GridFunction
    interval: tuple
    n: int
    error: float
    lambda_h: float  # discrete eigenvalue on the grid that carries u2
    pencil: DiscretePencil
    iterations: int

    def residual(self, tau, p, lo=None, hi=None):
        """Max of ``L_h u2 - tau m u2^p`` over fine-grid nodes in ``[lo, hi]``."""
        pen = self.pencil
        xi = pen.x[1:-1]
        u = self.u2.values[1:-1]
        sel = np.ones_like(xi, dtype=bool)
        if lo is not None:
            sel &= xi >= lo
        if hi is not None:
            sel &= xi <= hi
        viol = pen.operator(u) - tau * pen.m * np.power(u, p)
        return float(np.max(viol[sel])) if np.any(sel) else 0.0


def discrete_eigenvalue(problem: Problem, interval, cells):
    pen = DiscretePencil.build(problem, interval, cells)
    lam, vec, it = _inverse_iteration(pen)
    return lam, vec, pen, it


def principal_eigenpair(problem: Problem, interval, tol=DEFAULT_TOL, n=DEFAULT_N) -> EigenPair:
    """Smallest positive eigenvalue of the weight on ``interval``.

    Three nested grids (N/2, N, 2N cells) give two Richardson values; their
    difference over 15 estimates the error of the finer one. The grid is
    doubled until that estimate is below ``tol * lambda``.
    """
    x0, x1 = interval
    if not x0 < x1:
        raise EigenError("empty interval")
    cells = max(4, n + 1)
    cells += cells % 2
    coarse = discrete_eigenvalue(problem, interval, cells // 2)[0]
    mid_lam, _, _, _ = discrete_eigenvalue(problem, interval, cells)
    while True:
        fine_lam, vec, pen, it = discrete_eigenvalue(problem, interval, 2 * cells)
        r_coarse = (4 * mid_lam - coarse) / 3
        r_fine = (4 * fine_lam - mid_lam) / 3
        err = abs(r_fine - r_coarse) / 15
        if err <= tol * abs(r_fine) or 2 * cells >= MAX_CELLS:
            break
        coarse, mid_lam, cells = mid_lam, fine_lam, 2 * cells
    if r_fine <= 0:
        raise EigenError("principal eigenvalue is not positive")
    u2 = GridFunction(pen.x, np.concatenate([[0.0], vec, [0.0]]))
    return EigenPair(r_fine, u2, (x0, x1), len(vec), err, fine_lam, pen, it)
