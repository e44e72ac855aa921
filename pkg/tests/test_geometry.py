import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rectistable.geometry import (
    Ball,
    builtin_fields,
    chord_geometry,
    delta_D,
    diagonal_field,
    field_by_name,
    identity_field,
    rotation_scale_field,
)


def test_ball_basics():
    b = Ball((1.0, -2.0), 3.0)
    assert b.d == 2
    assert delta_D(np.array([1.0, -2.0]), b) == pytest.approx(3.0)
    assert b.contains([1.0, 0.9]) and not b.contains([1.0, 1.0])
    with pytest.raises(ValueError):
        Ball((0.0,), 1.0)
    with pytest.raises(ValueError):
        Ball((0.0, 0.0), 0.0)


@pytest.mark.parametrize("fld", builtin_fields(2) + builtin_fields(3), ids=lambda f: f"{f.name}-{f.d}")
def test_ellipticity_bounds_hold(fld):
    rep = fld.probe(n=4000)
    assert rep["entry_bound_ok"] and rep["det_bound_ok"]
    # continuity: the modulus shrinks with the step
    m = rep["continuity_moduli"]
    assert all(b <= a + 1e-15 for a, b in zip(m, m[1:]))


def test_rotation_scale_is_scaled_rotation():
    f = rotation_scale_field(2)
    rng = np.random.default_rng(0)
    for x in rng.uniform(-3, 3, size=(50, 2)):
        A = f.eval(x)
        s = math.sqrt(abs(np.linalg.det(A)))
        assert np.allclose(A.T @ A, s * s * np.eye(2), atol=1e-12)
        assert 0.5 - 1e-12 <= s <= 2 + 1e-12


def test_eval_many_matches_eval():
    f = rotation_scale_field(3)
    xs = np.random.default_rng(1).normal(size=(20, 3))
    many = f.eval_many(xs)
    for x, A in zip(xs, many):
        assert np.array_equal(A, f.eval(x))


def test_field_lookup():
    assert field_by_name("identity").name == "identity"
    assert np.array_equal(field_by_name("diagonal", 3).eval(np.zeros(3)), np.diag([2.0, 1.0, 1.0]))
    with pytest.raises(ValueError):
        field_by_name("nope")
    with pytest.raises(ValueError):
        diagonal_field([1.0, -1.0])
    assert identity_field(2).is_constant and not rotation_scale_field(2).is_constant


@given(st.floats(0.0, 0.999), st.floats(0, 2 * math.pi), st.floats(0.01, 0.25), st.floats(0.05, 1.0))
def test_chord_chain_monotone(rho, ang, eps_frac, eta_frac):
    r = 1.0
    eps = eps_frac * r
    eta = eta_frac * eps
    x = np.array([rho * math.sin(ang), rho * math.cos(ang)])
    g = chord_geometry(x, r, eps, eta, N=8.0)
    ch = g.chain()
    assert all(a <= b for a, b in zip(ch, ch[1:]))
    # half chord of the sphere of radius r through x contains x_d
    assert g.S2 >= g.xd - 1e-12
    assert g.q == pytest.approx(r * r - (r - eps) ** 2)


def test_chord_rejects_outside():
    with pytest.raises(ValueError):
        chord_geometry(np.array([0.0, 1.0]), 1.0, 0.1, 0.05)
