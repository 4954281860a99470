import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sublin1d.certify import Verdict, certify
from sublin1d.config import config_from_dict, step_config
from sublin1d.construct import build_supersolution
from sublin1d.model import Coefficient, Problem, normalize
from sublin1d.solve import (
    Grid,
    NonlinearitySpec,
    SolveError,
    apply_operator,
    check_growth,
    lift_exponent,
    pstar_search,
    solve_certified,
    solve_linear,
    solve_maximal,
    solve_sublinear,
)

ONE = Coefficient.constant(1.0, 0, 1)


def step(eta, p=0.5, c=1.0, b=0.0):
    return normalize(config_from_dict(step_config(eta, p=p, c=c, b=b)).problem)


def test_linear_solve_reproduces_quadratic_exactly():
    P = Problem.simple(0, 1, ONE, 0.5)
    g = Grid(0, 1, 199)
    u = solve_linear(P, 1.0, g)
    x = g.interior
    assert np.max(np.abs(u - x * (1 - x) / 2)) < 1e-13


def test_linear_solve_with_drift_converges_second_order():
    # u = sin(pi x): rhs = (pi^2 + c) sin + b pi cos
    b, c = 3.0, 2.0
    P = Problem.simple(0, 1, ONE, 0.5, b=b, c=c)
    rhs = lambda x: (np.pi**2 + c) * np.sin(np.pi * x) + b * np.pi * np.cos(np.pi * x)
    errs = []
    for n in (99, 199, 399):
        g = Grid(0, 1, n)
        errs.append(np.max(np.abs(solve_linear(P, rhs, g) - np.sin(np.pi * g.interior))))
    assert 3.8 < errs[0] / errs[1] < 4.2 and 3.8 < errs[1] / errs[2] < 4.2


def test_grid_refines_for_strong_drift():
    P = Problem.simple(0, 1, ONE, 0.5, b=5000.0)
    g = Grid.for_problem(P, 100)
    assert g.h * 5000 / 2 < 1


@settings(max_examples=15, deadline=None)
@given(st.floats(0.0, 50.0), st.floats(-20.0, 20.0))
def test_discrete_maximum_principle(c, b):
    P = Problem.simple(0, 1, ONE, 0.5, b=b, c=c)
    g = Grid.for_problem(P, 120)
    rng = np.random.default_rng(0)
    u = solve_linear(P, rng.uniform(0, 1, g.n), g)
    assert np.all(u >= 0)


def test_certified_solution_on_step_problem():
    P = step(0.1)
    res = solve_certified(certify(P), n=1000)
    assert res.residual_inf <= 1e-9
    assert res.min_interior > 0
    # iterates increase from the subsolution
    assert res.monotone_trace and res.iterations >= 1
    Lu = apply_operator(res.problem, res.grid, res.u)
    assert np.allclose(Lu, res.rhs(), atol=1e-8)


def test_unordered_pair_is_rejected():
    P = step(0.1)
    g = Grid(0, 1, 200)
    with pytest.raises(SolveError):
        solve_sublinear(P, np.full(g.n, 2.0), np.full(g.n, 1.0), g)
    with pytest.raises(SolveError):
        solve_sublinear(P, np.zeros(g.n), np.ones(g.n), g)


def test_maximal_solution_agrees_with_certified_one():
    P = step(0.1)
    g = Grid(0, 1, 600)
    low = solve_certified(certify(P), g, 600)
    high = solve_maximal(P, build_supersolution(P, 600).sample(g.interior), g)
    assert high.residual_inf <= 1e-9
    assert np.max(np.abs(high.u - low.u)) < 1e-8 * np.max(low.u)


def test_lifted_solution_is_subsolution_for_larger_exponent():
    P = step(0.1)
    res = solve_certified(certify(P), n=800)
    for q in (0.5, 0.6, 0.75, 0.9):
        lift = lift_exponent(res, q)
        assert lift.passed, (q, lift.max_violation)
    with pytest.raises(ValueError):
        lift_exponent(res, 0.3)


def test_pstar_with_stub_certifier():
    class Fake:
        def __init__(self, v):
            self.verdict = v

    def fake(problem):
        p = problem.p
        return Fake(Verdict.NOT_EXISTS if p < 0.4 else Verdict.EXISTS if p > 0.6 else
                    Verdict.INCONCLUSIVE)

    res = pstar_search(step(0.1), tol_p=0.02, certify_fn=fake)
    lo, hi = res.bracket
    assert 0.4 - 0.005 <= lo < 0.4 and 0.6 < hi <= 0.6 + 0.005
    assert len(res.probes) <= 40


def test_pstar_when_everything_exists():
    res = pstar_search(step(0.001), certify_fn=lambda P: certify(P))
    assert res.exists_edge is not None and res.exists_edge <= 1e-3
    assert res.not_exists_edge is None


def test_growth_check_flags_bad_nonlinearity():
    good = NonlinearitySpec(np.sqrt, 1.0, 1.0, 1.0, 0.5, 0.5)
    assert all(check_growth(good, 2.0, 4.0).values())
    bad = NonlinearitySpec(lambda x: x, 1.0, 1.0, 1.0, 0.5, 0.5)
    assert not all(check_growth(bad, 2.0, 4.0).values())
