import math

import numpy as np
import pytest

from sublin1d.certify import Verdict, certify
from sublin1d.config import config_from_dict, step_config
from sublin1d.construct import (
    ConstructionError,
    build_outer_pieces,
    build_supersolution,
    construct,
    subsolution_rows,
    verify_subsolution,
)
from sublin1d.calculus import cp
from sublin1d.model import normalize

I = (0.4, 0.6)


def step(eta, p=0.5, c=1.0, b=0.0):
    return normalize(config_from_dict(step_config(eta, p=p, c=c, b=b)).problem)


def _fd_operator(u, P, x, h=1e-4):
    d2 = (u(x + h) - 2 * u(x) + u(x - h)) / h**2
    d1 = (u(x + h) - u(x - h)) / (2 * h)
    return -d2 + P.b(x) * d1 + P.c(x) * u(x)


@pytest.mark.parametrize("method, kw", [
    ("sinh", {}),
    ("cosh", {}),
    ("i1", {}),
])
def test_outer_pieces_vanish_increase_and_stay_below_one(method, kw):
    P = step(0.01)
    u1, u3, params = build_outer_pieces(P, I, 250.0, method)
    x = np.linspace(0, 0.6, 301)
    assert u1(0.0) == 0 and abs(u3(1.0)) < 1e-15
    assert np.all(np.diff(u1(x)) >= 0)
    assert np.max(u1(x)) <= 1


def test_sinh_piece_operator_identity():
    # with u = f^k, f = A sinh(w x): L u = -tau ||m-|| u^p - c (1-p)/(1+p) u
    P = step(0.1)
    tau, p = 250.0, 0.5
    u1, _, _ = build_outer_pieces(P, I, tau, "sinh")
    x = np.linspace(0.05, 0.35, 7)
    closed = -tau * 0.1 * u1(x) ** p - (1 - p) / (1 + p) * u1(x)
    exact = -u1(x, 2) + P.c(x) * u1(x)
    assert np.allclose(exact, closed, rtol=1e-11, atol=1e-14)
    assert np.allclose(_fd_operator(u1, P, x), closed, rtol=1e-5)
    assert np.all(exact <= tau * P.m(x) * u1(x) ** p)


def test_closed_form_derivatives_match_finite_differences():
    P = step(0.02, c=0.0, b=1.0)
    for method in ("i1", "i2"):
        u1, u3, _ = build_outer_pieces(P, I, 300.0, method)
        x = np.array([0.1, 0.2, 0.3, 0.45, 0.55])  # away from the jumps of m
        h = 1e-5
        for u in (u1, u3):
            fd = (u(x + h) - u(x - h)) / (2 * h)
            assert np.allclose(u(x, 1), fd, rtol=1e-6, atol=1e-12)


def test_sinh_amplitude_formula():
    P = step(0.1, p=0.5)
    tau = 260.0
    u1, _, params = build_outer_pieces(P, I, tau, "sinh")
    assert params["k"] == 4.0
    assert params["rate"] == pytest.approx(math.sqrt(1 / cp(0.5)))
    x = 0.3
    assert u1(x) == pytest.approx((math.sqrt(tau * 0.1) * math.sinh(x / math.sqrt(12))) ** 4)


def test_tau_outside_window_is_rejected():
    with pytest.raises(ConstructionError, match="tau outside"):
        build_outer_pieces(step(0.1), I, 1e4, "sinh")


def test_glued_subsolution_on_step_problem():
    cert = certify(step(0.1))
    spec = construct(cert)
    assert spec.method == "sinh" and spec.tau == pytest.approx(247.74011, rel=1e-6)
    assert 0.4 < spec.x_under0 < spec.x_over1 < 0.6
    for j in spec.junctions.values():
        assert j["value_gap"] <= 1e-10 and j["slope_jump"] >= -1e-8
    check = verify_subsolution(spec)
    assert check.passed
    assert check.threshold == pytest.approx(1e-8 * (1 + spec.tau * 1.0))
    rows = subsolution_rows(spec, points=501)
    assert rows.shape == (499, 5)
    assert np.all(rows[:, 1] >= 0)


def test_glued_subsolution_for_rescaled_weight_route():
    cert = certify(step(0.04, c=0.0), variants=("puf",))
    assert cert.verdict == Verdict.EXISTS
    spec = construct(cert)
    assert spec.method == "i2" and spec.epsilon > 0
    assert verify_subsolution(spec).passed


def test_perturbed_subsolution_fails_verification():
    cert = certify(step(0.1))
    spec = construct(cert)
    # larger tau breaks the outer pieces (more negative weight), smaller the eigen piece
    assert not verify_subsolution(spec, tau=spec.tau * 10).passed
    assert not verify_subsolution(spec, tau=spec.tau * 0.5).passed


def test_supersolution():
    P = step(0.1)
    sup = build_supersolution(P, n=400)
    assert sup.max_violation <= 1e-10
    assert sup.k_super == pytest.approx((np.max(sup.phi.values) + 1) ** 1.0)
    assert np.all(sup.values >= sup.k_super)
