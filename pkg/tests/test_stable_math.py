import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from rectistable.rng import derive_key, philox4x32, philox_uniform_pair, stable_draw
from rectistable.stable_math import (
    StabilityIndex,
    compute_A_alpha,
    compute_A_tilde_alpha,
    generator_constants,
    sample_increment,
    sample_standard_stable,
    tail_constant,
)

alphas = st.floats(0.02, 1.98)


def mp_A(a):
    a = mp.mpf(a)
    return a * 2 ** (a - 1) * mp.gamma((1 + a) / 2) / (mp.sqrt(mp.pi) * mp.gamma(1 - a / 2))


def mp_At(a):
    a = mp.mpf(a)
    return 2**a * mp.gamma((1 + a) / 2) * mp.gamma(1 + a / 2) / mp.sqrt(mp.pi)


@pytest.mark.parametrize("a", [0.1, 0.5, 0.999, 1.0, 1.3, 1.5, 1.9])
def test_constants_against_mpmath(a):
    assert compute_A_alpha(a) == pytest.approx(float(mp_A(a)), rel=1e-13)
    assert compute_A_tilde_alpha(a) == pytest.approx(float(mp_At(a)), rel=1e-13)


def test_hand_values_at_one():
    assert abs(compute_A_alpha(1.0) * math.pi - 1) < 1e-14
    assert abs(compute_A_tilde_alpha(1.0) - 1) < 1e-14
    # alpha = 1/2: A = 2^-1/2 Gamma(3/4) / (2 sqrt(pi) Gamma(3/4)) = 1/(2 sqrt(2 pi))
    assert compute_A_alpha(0.5) == pytest.approx(1 / (2 * math.sqrt(2 * math.pi)), rel=1e-14)


@pytest.mark.parametrize("a", [0.5, 1.0, 1.5])
def test_kernel_normalization_gives_unit_exponent(a):
    # int (1 - cos w) A |w|^{-1-a} dw over R must equal |xi|^a at xi = 1
    A = mp.mpf(compute_A_alpha(a))
    near = mp.quad(lambda w: 2 * mp.sin(w / 2) ** 2 * w ** (-1 - a), [0, 1])
    # Fourier tail by QUADPACK's QAWF
    osc = integrate.quad(lambda w: w ** (-1 - a), 1, np.inf, weight="cos", wvar=1.0, epsabs=1e-14)[0]
    val = 2 * A * (near + 1 / mp.mpf(a) - osc)
    assert float(val) == pytest.approx(1.0, rel=1e-8)


@given(alphas)
def test_constants_positive_and_consistent(a):
    g = generator_constants(a)
    assert g.a_alpha > 0 and g.a_tilde_alpha > 0
    assert tail_constant(a) == pytest.approx(2 * g.a_alpha / a)


@pytest.mark.parametrize("bad", [0.0, 2.0, -1.0, float("nan"), 2.5])
def test_stability_index_rejects(bad):
    with pytest.raises(ValueError):
        StabilityIndex(bad)
    with pytest.raises(ValueError):
        compute_A_alpha(bad)


@pytest.mark.parametrize("a", [0.7, 1.0, 1.5])
def test_sampler_matches_scipy_stable(a):
    x = sample_standard_stable(a, np.random.default_rng(1), size=20000)
    # scipy's S1 parametrization with beta = 0 has exponent |scale xi|^alpha
    cdf = (lambda t: stats.cauchy.cdf(t)) if a == 1.0 else stats.levy_stable(a, 0.0).cdf
    grid = np.array([-5.0, -1.0, -0.3, 0.0, 0.4, 1.0, 3.0])
    emp = (x[:, None] <= grid).mean(axis=0)
    assert np.max(np.abs(emp - cdf(grid))) < 0.012


def test_increment_scaling():
    rng = np.random.default_rng(2)
    x = sample_increment(1.5, 0.01, rng, size=40000)
    med = np.median(np.abs(x))
    ref = 0.01 ** (1 / 1.5) * np.median(np.abs(sample_standard_stable(1.5, np.random.default_rng(3), 40000)))
    assert med == pytest.approx(ref, rel=0.03)
    with pytest.raises(ValueError):
        sample_increment(1.0, 0.0, rng)


def test_philox_known_answers():
    cases = [
        ((0, 0, 0, 0), (0, 0), (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)),
        ((0xFFFFFFFF,) * 4, (0xFFFFFFFF,) * 2, (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)),
        ((0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344), (0xA4093822, 0x299F31D0),
         (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1)),
    ]
    for ctr, key, want in cases:
        got = tuple(int(v) for v in philox4x32(*ctr, *key))
        assert got == want


def test_counter_streams():
    k = derive_key(7, 1, 2)
    assert k == derive_key(7, 1, 2) and k != derive_key(7, 1, 3) and k != derive_key(8, 1, 2)
    u = np.array([philox_uniform_pair(p, s, c, *k) for p in range(200) for s in range(5) for c in range(2)])
    assert np.all((u > 0) & (u < 1))
    assert abs(u.mean() - 0.5) < 0.02
    x = np.array([stable_draw(1.0, p, 0, 0, *k) for p in range(20000)])
    assert stats.kstest(x, stats.cauchy.cdf).pvalue > 1e-3
    with pytest.raises(ValueError):
        derive_key(-1)
