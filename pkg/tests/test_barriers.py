import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st

from rectistable.barriers import (
    BarrierParams,
    PowerProfile,
    Theta_eval,
    ThetaCap,
    barrier_prefactor,
    build_theta,
    choose_theta_params,
    default_N,
    f_b_theta_eval,
    F_b_Theta_eval,
    g_indicator,
    h_eval,
    lambda_eval,
    phi_comparison,
    phi_integral,
    theta_class_audit,
)
from rectistable.geometry import Ball

mp.mp.dps = 40


def mp_theta(theta, v):
    """High-precision evaluation of the stored pieces (same coefficients, exact arithmetic)."""
    if v <= theta.T0:
        return 1 / (mp.mpf(theta.r) ** 2 - v)
    if v <= theta.T1:
        u = v - mp.mpf(theta.T0)
        return sum(mp.mpf(c) * u**k for k, c in enumerate(theta.c1))
    if v <= theta.T2:
        u = v - mp.mpf(theta.T1)
        return sum(mp.mpf(c) * u**k for k, c in enumerate(theta.c2))
    return mp.mpf(theta.sup_value)


def test_closed_form_values_at_breaks():
    p = choose_theta_params(1.0, 0.25, alpha=1.0)
    th = build_theta(p)
    cf = th.closed_form_values()
    for name, t in zip(("T0", "T1", "T2"), th.breakpoints):
        for k, lab in enumerate(("theta", "dtheta", "ddtheta")):
            left = float(th.derivative(np.array([t]), k)[0])
            assert left == pytest.approx(cf[f"{lab}_{name}"], rel=1e-9, abs=1e-9 / th.q ** (k + 1))


@given(st.floats(0.2, 5.0), st.floats(0.02, 0.25), st.floats(4.0, 60.0), st.sampled_from([None, 0.5, 1.0, 1.5]))
def test_theta_class_random(r, eps_frac, N, alpha):
    p = choose_theta_params(r, eps_frac * r, N, alpha=alpha)
    rep = theta_class_audit(build_theta(p), p, n_grid=2000)
    assert rep.passed, rep.checks
    expo = 6.0 if alpha is None else 4.0 + alpha
    assert rep.observed["sup_minus_inv_q"] <= N ** (-expo) * (1 + 1e-9)


def test_params_validation():
    with pytest.raises(ValueError):
        BarrierParams(1.0, 0.3, 0.1, 4.0, 0.01, 0.001)
    with pytest.raises(ValueError):
        BarrierParams(1.0, 0.2, 0.3, 4.0, 0.01, 0.001)
    with pytest.raises(ValueError):
        choose_theta_params(1.0, 0.2, N=3.0)
    assert default_N(1.0, 0.25) == 4.0
    assert default_N(2.0, 0.25) == pytest.approx(2.0 * 4.0 / 0.25)


@pytest.mark.parametrize("v", [0.1, 0.5, 0.56, 0.5625, 0.5626, 0.58, 0.9, 0.99])
def test_theta_diff_and_sym2_exact(v):
    p = choose_theta_params(1.0, 0.25, alpha=1.0)
    th = build_theta(p)
    for h in (1e-9, 1e-5, 1e-3, 0.02, 0.2):
        if v + h >= 1 or v - h < 0:
            continue
        d = float(th.diff(np.array([v]), np.array([h]))[0])
        vm, hm = mp.mpf(v), mp.mpf(h)
        want = mp_theta(th, vm + hm) - mp_theta(th, vm)
        assert d == pytest.approx(float(want), rel=1e-9, abs=1e-14 * th.sup_value)
        s2 = float(th.sym2(np.array([v]), np.array([h]))[0])
        want2 = mp_theta(th, vm + hm) + mp_theta(th, vm - hm) - 2 * mp_theta(th, vm)
        # the stored coefficients are continuous only to rounding: allow a few ulps of theta
        assert s2 == pytest.approx(float(want2), rel=1e-5, abs=2e-15 * th.sup_value)


def test_theta_cap_derivatives_and_bounds():
    cap = ThetaCap(1.0, 0.25)
    v = np.linspace(0, 0.999, 2001)
    for k in (0, 1):
        num = np.gradient(cap.derivative(v, k), v)
        inner = np.abs(v - cap.T0) > 2e-3
        assert np.allclose(num[inner][1:-1], cap.derivative(v, k + 1)[inner][1:-1], rtol=2e-3)
    assert np.all(cap.derivative(v, 0) <= 4 / cap.q)
    assert np.all(cap.derivative(v, 1) <= 3 / cap.q**2)
    with pytest.raises(ValueError):
        Theta_eval(1.0, 1.0, 0.25)
    assert Theta_eval(0.0, 1.0, 0.25) == pytest.approx(1.0)


@pytest.mark.parametrize("p", [0.25, 0.5, 0.75, -0.25, -0.5])
def test_power_profile_sym2(p):
    prof = PowerProfile(1.0, p, 1.3)
    for y in (0.0, 0.3, 0.8, 0.95):
        for h in (1e-8, 1e-4, 1e-2, 0.04):
            got = float(prof.sym2(np.array([y]), np.array([h]))[0])
            f = lambda s: 1.3 * (1 - mp.mpf(s)) ** p  # noqa: E731
            ym, hm = mp.mpf(y), mp.mpf(h)
            want = f(ym + hm) + f(ym - hm) - 2 * f(ym)
            assert got == pytest.approx(float(want), rel=1e-10)


def test_point_evaluators():
    x = np.array([0.3, 0.4])
    assert lambda_eval(x, 1.0, 1.0) == pytest.approx(math.sqrt(0.75))
    assert h_eval(x, 1.0, 1.0) == pytest.approx(1 / math.sqrt(0.75))
    assert lambda_eval(np.array([2.0, 0.0]), 1.0, 1.0) == 0.0
    with pytest.raises(ValueError):
        h_eval(np.array([1.0, 0.0]), 1.0, 1.0)
    ball = Ball((0.0, 0.0), 1.0)
    assert g_indicator(np.array([0.0, 1.1]), ball, 0.25, 0.125) == 0.0
    assert g_indicator(np.array([0.0, 1.3]), ball, 0.25, 0.125) == 1.0


def test_barrier_values_and_scaling():
    ball = Ball((0.0, 0.0), 1.0)
    p = choose_theta_params(1.0, 0.25, alpha=1.0)
    th = build_theta(p)
    x = np.array([0.1, 0.2])
    pref = barrier_prefactor(p, 1.0)
    assert pref == pytest.approx(p.eta_ring / 0.5)
    want = pref * math.sqrt(1 - 0.05) / (1 - 0.05)
    assert f_b_theta_eval(x, p, th, ball, 1.0) == pytest.approx(want, rel=1e-14)
    assert F_b_Theta_eval(x, p, ball, 1.0) == pytest.approx(want, rel=1e-14)
    y = np.array([0.0, 1.3])
    assert f_b_theta_eval(y, p, th, ball, 1.0) == 1.0
    with pytest.raises(ValueError):
        f_b_theta_eval(x, p, th, Ball((0.0, 0.0), 2.0), 1.0)


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_phi_integral_against_mpmath(alpha):
    ball = Ball((0.0, 0.0), 1.0)
    x = np.array([0.0, 0.7])
    delta = 0.3

    def f(t):
        # phi at y = 1 + t, written in t so nodes near the sphere keep full precision
        return delta ** (alpha / 2) / (t ** (alpha / 2) * (1 + t) ** (alpha / 2) * (t + delta))

    for lo, hi in ((1.0, 1.001), (1.0, 2.0), (1.2, 1.5), (3.0, 20.0)):
        a, b = mp.mpf(lo) - 1, mp.mpf(hi) - 1
        want = mp.quad(f, [a, (a + b) / 2, b])
        assert phi_integral(x, lo, hi, ball, alpha) == pytest.approx(float(want), rel=1e-9)
    tail = mp.quad(f, [0, 1, mp.inf])
    assert phi_integral(x, 1.0, math.inf, ball, alpha) == pytest.approx(float(tail), rel=1e-8)
    assert phi_comparison(x, 1.5, ball, alpha) == pytest.approx(f(0.5))


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_phi_far_tail_exponent(alpha):
    # log-log slope of the exact phi on [10r, 20r] approaches -(1 + alpha)
    ball = Ball((0.0, 0.0), 1.0)
    y = np.geomspace(10, 20, 50)
    vals = phi_comparison(np.zeros(2), y, ball, alpha)
    slope = np.polyfit(np.log(y), np.log(vals), 1)[0]
    assert abs(slope + 1 + alpha) < 0.15


def test_phi_rejects_bad_input():
    ball = Ball((0.0, 0.0), 1.0)
    with pytest.raises(ValueError):
        phi_comparison(np.array([0.0, 1.0]), 2.0, ball, 1.0)
    with pytest.raises(ValueError):
        phi_comparison(np.zeros(2), 1.0, ball, 1.0)
    with pytest.raises(ValueError):
        phi_integral(np.zeros(2), 0.5, 2.0, ball, 1.0)
    # sanity: finite total mass comparable to 1
    tot = phi_integral(np.zeros(2), 1.0, math.inf, ball, 1.0)
    assert 0.1 < tot < 10
