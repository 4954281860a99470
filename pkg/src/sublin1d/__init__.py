"""Existence certificates and solvers for 1-D sublinear problems with indefinite weight."""

from .certify import Certificate, ConditionReport, Verdict, certify
from .construct import build_supersolution, construct, verify_subsolution
from .eigen import principal_eigenpair
from .model import Coefficient, Problem, coefficient_from_pieces
from .solve import Grid, SolveResult, pstar_search, solve_certified, solve_sublinear

__all__ = [
    "Certificate", "ConditionReport", "Verdict", "certify",
    "build_supersolution", "construct", "verify_subsolution",
    "principal_eigenpair",
    "Coefficient", "Problem", "coefficient_from_pieces",
    "Grid", "SolveResult", "pstar_search", "solve_certified", "solve_sublinear",
]

__version__ = "0.1.0"
