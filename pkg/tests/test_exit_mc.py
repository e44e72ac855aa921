import math

import numpy as np
import pytest
from scipy import stats

from rectistable.exit_mc import (
    CensoringError,
    SimulationSpec,
    boundary_mass,
    default_bin_edges,
    estimate_exit_density,
    estimate_exit_time_mean,
    estimate_green_integral,
    harmonic_eval,
    nested_harmonic_eval,
    simulate_exit,
    spec_hash,
    uniform_exit_probability,
    wilson_interval,
)
from rectistable.geometry import Ball, identity_field, rotation_scale_field
from rectistable.levy_exact import exterior, ring
from rectistable.stable_math import compute_A_tilde_alpha

BALL = Ball((0.0, 0.0), 1.0)


def test_exit_time_mean_at_centre():
    # A = I: E tau = (r^2 - |x|^2)^{alpha/2} / (d A~)
    spec = SimulationSpec(time_step=1e-3, paths=20000)
    ens = simulate_exit(np.zeros(2), BALL, identity_field(2), 1.0, spec)
    m, (lo, hi) = estimate_exit_time_mean(ens)
    want = 1.0 / (2 * compute_A_tilde_alpha(1.0))
    assert lo - 0.01 <= want <= hi + 0.01
    assert np.all(ens.exit_radius[ens.ok] >= 1.0)


def test_reproducible_across_blocks_and_threads():
    base = SimulationSpec(time_step=2e-3, paths=3000, block_size=4096)
    a = simulate_exit(np.array([0.2, 0.1]), BALL, rotation_scale_field(2), 1.3, base)
    b = simulate_exit(np.array([0.2, 0.1]), BALL, rotation_scale_field(2), 1.3,
                      SimulationSpec(time_step=2e-3, paths=3000, block_size=257, workers=3))
    assert np.array_equal(a.exit_position, b.exit_position) and np.array_equal(a.steps, b.steps)
    assert a.to_csv() == b.to_csv()
    c = simulate_exit(np.array([0.2, 0.1]), BALL, rotation_scale_field(2), 1.3,
                      SimulationSpec(time_step=2e-3, paths=3000, master_seed=1))
    assert not np.array_equal(a.exit_time, c.exit_time)


def test_step_halving_levels_refine_the_step():
    sp = SimulationSpec(time_step=4e-3, paths=500, step_halving_levels=2)
    assert sp.effective_time_step == pytest.approx(1e-3) and sp.effective_max_steps == 4 * sp.max_steps
    a = simulate_exit(np.zeros(2), BALL, identity_field(2), 1.0, sp)
    b = simulate_exit(np.zeros(2), BALL, identity_field(2), 1.0, SimulationSpec(time_step=1e-3, paths=500,
                                                                              max_steps=4 * sp.max_steps))
    assert np.array_equal(a.exit_time, b.exit_time)


def test_censoring_is_reported():
    with pytest.raises(CensoringError) as ei:
        simulate_exit(np.zeros(2), BALL, identity_field(2), 0.5, SimulationSpec(time_step=1e-4, max_steps=5,
                                                                                paths=200))
    assert ei.value.ensemble.n_censored > 0
    with pytest.raises(ValueError):
        simulate_exit(np.array([1.0, 0.0]), BALL, identity_field(2), 1.0, SimulationSpec(paths=10))
    with pytest.raises(ValueError):
        SimulationSpec(time_step=0)


def test_histogram_accounting_and_wilson():
    ens = simulate_exit(np.zeros(2), BALL, identity_field(2), 1.0, SimulationSpec(time_step=2e-3, paths=5000))
    edges = default_bin_edges(1.0)
    assert edges[0] == 1.0 and edges[-1] == 20.0 and np.all(np.diff(edges) > 0)
    h = estimate_exit_density(ens, edges)
    assert h.counts.sum() + h.overflow == h.total == ens.n_paths
    assert np.all(h.density >= 0)
    lo, hi = wilson_interval(np.array([0, 7, 100]), 100)
    for k, a, b in zip((0, 7, 100), lo, hi):
        ci = stats.binomtest(k, 100).proportion_ci(method="wilson")
        assert (a, b) == pytest.approx((ci.low, ci.high), abs=1e-12)


def test_boundary_mass_monotone():
    ens = simulate_exit(np.zeros(2), BALL, identity_field(2), 1.0, SimulationSpec(time_step=2e-3, paths=5000))
    m = boundary_mass(ens, [1e-1, 1e-2, 1e-3])
    assert m[0] > m[1] > m[2] >= 0


@pytest.mark.parametrize("fld", [identity_field(2), rotation_scale_field(2)], ids=lambda f: f.name)
def test_green_identity_small(fld):
    gi = estimate_green_integral(np.array([0.1, 0.2]), BALL, fld, 1.0, SimulationSpec(time_step=2e-3, paths=20000),
                                 ring(2.0, 0.25))
    assert gi.lhs > 0 and gi.rhs > 0
    assert gi.agrees(4.0), (gi.lhs, gi.rhs, gi.combined_se)
    with pytest.raises(ValueError):
        estimate_green_integral(np.zeros(2), BALL, fld, 1.0, SimulationSpec(paths=10), exterior(0.5))


def test_harmonic_and_nested_agree():
    sp = SimulationSpec(time_step=2e-3, paths=6000)

    def g(pos):
        return (np.linalg.norm(pos, axis=1) > 1.3).astype(float)

    u, se = harmonic_eval(np.zeros(2), BALL, identity_field(2), 1.0, sp, g)
    one, _ = harmonic_eval(np.zeros(2), BALL, identity_field(2), 1.0, sp, lambda p: np.ones(len(p)))
    assert one == 1.0
    v, se2 = nested_harmonic_eval(np.zeros(2), BALL, Ball((0.0, 0.0), 0.5), identity_field(2), 1.0, sp, g)
    assert abs(u - v) <= 4 * math.hypot(se, se2)


def test_uniform_exit_positive():
    pts = np.array([[0.0, 0.0], [0.0, 0.9], [0.5, 0.5]])
    res = uniform_exit_probability(pts, BALL, identity_field(2), 1.0, SimulationSpec(time_step=1e-4, paths=2000))
    assert all(r["p"] > 0 for r in res)


def test_manifest_and_hash():
    ens = simulate_exit(np.zeros(2), BALL, identity_field(2), 1.0, SimulationSpec(time_step=2e-3, paths=50))
    man = ens.manifest()
    assert man["paths"] == 50 and man["spec"]["time_step"] == 2e-3
    assert spec_hash({"a": 1, "b": 2}) == spec_hash({"b": 2, "a": 1})
    assert ens.to_csv().splitlines()[0] == "path,exit_time,exit_radius,steps,censored,x_1,x_2"
