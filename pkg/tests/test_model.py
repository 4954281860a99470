import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sublin1d.model import (
    ClosedPiece,
    Coefficient,
    NoPositivityError,
    Problem,
    ProblemError,
    Term,
    candidate_intervals,
    coefficient_from_pieces,
    decompose_weight,
    normalize,
)


def step_weight(eta, lo=0.4, hi=0.6):
    return coefficient_from_pieces(0, 1, [
        {"range": [0, lo], "poly": [-eta]},
        {"range": [lo, hi], "poly": [1]},
        {"range": [hi, 1], "poly": [-eta]},
    ])


def test_closed_piece_derivatives_match_finite_differences():
    pc = ClosedPiece((1.0, -2.0, 0.5), (Term("sin", 0.3, 4.0), Term("exp", 0.1, -1.0)))
    x = np.linspace(0.1, 0.9, 7)
    h = 1e-5
    fd1 = (pc(x + h) - pc(x - h)) / (2 * h)
    fd2 = (pc(x + h) - 2 * pc(x) + pc(x - h)) / h**2
    assert np.allclose(pc.derivative(x, 1), fd1, atol=1e-8)
    assert np.allclose(pc.derivative(x, 2), fd2, atol=1e-4)


def test_right_piece_wins_at_breakpoints():
    m = step_weight(0.1)
    assert m(0.4) == 1.0
    assert m(0.6) == -0.1
    assert m(np.array([0.0, 0.39, 0.5, 1.0])).tolist() == [-0.1, -0.1, 1.0, -0.1]


def test_pieces_must_tile_the_interval():
    with pytest.raises(ProblemError):
        coefficient_from_pieces(0, 1, [{"range": [0, 0.4], "poly": [1]},
                                       {"range": [0.5, 1], "poly": [1]}])
    with pytest.raises(ProblemError):
        coefficient_from_pieces(0, 1, [{"range": [0, 1], "poly": [1] * 7}])


def test_problem_validation():
    one = Coefficient.constant(1.0, 0, 1)
    with pytest.raises(ProblemError):
        Problem.simple(0, 1, one, 1.0)
    with pytest.raises(ProblemError):
        Problem.simple(1, 0, one, 0.5)
    with pytest.raises(ProblemError):
        Problem.simple(0, 1, one, 0.5, c=-1.0)
    with pytest.raises(ProblemError):
        Problem.simple(0, 1, one, 0.5, a=0.0)


def test_decomposition_and_candidates_on_step():
    d = decompose_weight(step_weight(0.1))
    assert candidate_intervals(d) == [(0.4, 0.6)]
    x = np.linspace(0, 1, 101)
    assert np.allclose(d.m_plus(x) - d.m_minus(x), d.m(x))
    assert np.all(d.m_plus(x) >= 0) and np.all(d.m_minus(x) >= 0)


def test_sign_changes_inside_a_trig_piece():
    m = coefficient_from_pieces(0, 1, [{"range": [0, 1], "poly": [0.0],
                                        "trig": {"kind": "sin", "amplitude": 1.0,
                                                 "frequency": 3 * math.pi}}])
    cands = candidate_intervals(decompose_weight(m))
    expected = [(0.0, 1 / 3), (2 / 3, 1.0)]
    assert len(cands) == 2
    for (a, b), (ea, eb) in zip(cands, expected):
        assert abs(a - ea) < 1e-12 and abs(b - eb) < 1e-12


def test_no_positivity_raises():
    with pytest.raises(NoPositivityError, match="maximum principle"):
        candidate_intervals(decompose_weight(Coefficient.constant(-1.0, 0, 1)))


def test_normalize_divides_by_diffusion():
    m = step_weight(0.1)
    P = Problem(0, 1, Coefficient.constant(2.0, 0, 1), Coefficient.constant(1.0, 0, 1),
                Coefficient.constant(0.5, 0, 1), m, 0.5)
    N = normalize(P)
    x = np.linspace(0.01, 0.99, 9)
    assert np.allclose(N.a(x), 1.0)
    assert np.allclose(N.m(x), m(x) / 2)
    assert np.allclose(N.b(x), 0.5) and np.allclose(N.c(x), 0.25)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 10), st.floats(-5, 5))
def test_scaling_is_linear(s, x0):
    m = step_weight(0.3)
    xs = np.linspace(0, 1, 11)
    assert np.allclose(m.scaled(s)(xs), s * m(xs))
    shifted = m + Coefficient.constant(x0, 0, 1)
    assert np.allclose(shifted(xs), m(xs) + x0)


def test_fingerprint_is_stable():
    P = Problem.simple(0, 1, step_weight(0.1), 0.5, c=1.0)
    Q = Problem.simple(0, 1, step_weight(0.1), 0.5, c=1.0)
    assert P.fingerprint() == Q.fingerprint()
    assert P.fingerprint() != P.with_(p=0.4).fingerprint()
