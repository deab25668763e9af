import numpy as np
import pytest
from hypothesis import given, strategies as st

from roughwave.fracspace import Field, Grid, HurstParam, dC_metric
from roughwave.swe import bump_data, damped_sigma, initial_term_I0, linear_sigma, solve_controlled
from roughwave.skeleton import (Control, PicardNonConvergence, bump_control, fixed_point_residual,
                                gronwall_ratio, mollified_family_probe, oscillating_control,
                                solve_skeleton, solve_skeleton_direct, super_linear_decay,
                                uniqueness_residual, weak_convergence_probe)

SMALL = Grid(3.0, 32, 1.0, 32)
HP = HurstParam(0.4)


def test_control_validation():
    with pytest.raises(ValueError):
        Control(np.zeros((3, 3)), SMALL)
    bad = np.zeros((SMALL.nt, SMALL.nx + 1))
    bad[0, 0] = np.nan
    with pytest.raises(ValueError):
        Control(bad, SMALL)


@given(st.integers(0, 2 ** 31), st.floats(-3, 3))
def test_energy_is_quadratic_and_nonnegative(seed, a):
    g = Control(np.random.default_rng(seed).standard_normal((SMALL.nt, SMALL.nx + 1)), SMALL)
    e = g.energy(HP)
    assert e > 0
    assert g.scaled(a).energy(HP) == pytest.approx(a * a * e, rel=1e-10, abs=1e-14)
    assert (g + g).energy(HP) == pytest.approx(4 * e, rel=1e-10)


def test_bump_control_energy_and_ball():
    g = bump_control(SMALL, HP, 0.5)
    assert g.energy(HP) == pytest.approx(0.5)
    assert g.in_SN(HP, 1.0) and not g.in_SN(HP, 0.99)
    assert bump_control(SMALL, HP, 0.0).energy(HP) == 0.0


def test_mollified_energy_below_rough_energy():
    g = bump_control(SMALL, HP, 0.5)
    assert g.energy(HP, eps=0.1) < g.energy(HP)


def test_picard_matches_direct_solution(std):
    args = (std["data"], std["sigma"], std["g"], std["hp"], std["grid"])
    u, tr = solve_skeleton(*args, tol=1e-12)
    v = solve_skeleton_direct(*args)
    assert np.abs(u.values - v.values).max() < 1e-10
    assert fixed_point_residual(u, *args) < 1e-11
    assert len(tr) <= 60 and super_linear_decay(tr.distances)


def test_zero_control_is_bitwise_initial_term(std):
    z = Control.zero(std["grid"])
    u, tr = solve_skeleton(std["data"], std["sigma"], z, std["hp"], std["grid"])
    assert np.array_equal(u.values, initial_term_I0(std["data"], std["grid"]).values)
    assert tr.distances[-1] == 0


def test_controlled_solution_without_noise_is_skeleton(std):
    args = (std["data"], std["sigma"], std["g"], std["hp"], std["grid"])
    sk, _ = solve_skeleton(*args, tol=1e-12)
    uc = solve_controlled(std["data"], std["sigma"], 0.0, None, std["g"], std["grid"], std["hp"]).u
    assert np.abs(uc.values - sk.values).max() < 1e-8


def test_nonconvergence_carries_trace(std):
    with pytest.raises(PicardNonConvergence) as ei:
        solve_skeleton(std["data"], std["sigma"], std["g"], std["hp"], std["grid"], max_iter=2)
    assert len(ei.value.trace) == 2
    with pytest.raises(ValueError):
        solve_skeleton(std["data"], std["sigma"], std["g"], std["hp"], std["grid"], tol=0)


def test_super_linear_decay_detector():
    import math
    fact = [1 / math.factorial(n) for n in range(1, 10)]
    assert super_linear_decay(fact)
    assert not super_linear_decay([2.0 ** -n for n in range(10)])
    assert not super_linear_decay([1.0, 0.5])


def test_uniqueness_from_different_starts():
    d, s = bump_data(), damped_sigma(1.0)
    g = bump_control(SMALL, HP, 0.5)
    u, _ = solve_skeleton(d, s, g, HP, SMALL, tol=1e-13)
    start = np.random.default_rng(3).standard_normal((SMALL.nt + 1, SMALL.nx + 1))
    v, _ = solve_skeleton(d, s, g, HP, SMALL, tol=1e-13, u_init=start)
    S1, S2 = uniqueness_residual(u, v, HP, SMALL)
    assert np.max(S1 + S2) < 1e-12


def test_gronwall_ratio_for_constant_residual():
    S1 = np.ones(SMALL.nt + 1)
    r = gronwall_ratio(S1, np.zeros_like(S1), SMALL, HP)
    n = 10
    lag = SMALL.t[n] - SMALL.t[:n]
    ref = 1 / (SMALL.dt * np.sum(lag ** 0.8 + lag ** 0.6))
    assert np.isnan(r[0]) and r[n] == pytest.approx(ref)
    assert np.all(gronwall_ratio(0 * S1, 0 * S1, SMALL, HP)[1:] == 0)


def test_weak_convergence_modes(std):
    rep = weak_convergence_probe(std["g"], (0, 2, 8, 32), std["data"], std["sigma"], std["hp"],
                                 std["grid"])
    d = [r["dC"] for r in rep["rows"]]
    assert d[0] == 0
    assert d[1] > d[2] > d[3]
    e = [r["energy"] for r in rep["rows"]]
    assert max(e) < 3 * e[0]      # the perturbations stay in a bounded energy ball


def test_oscillating_control_mode_zero_is_identity():
    g = bump_control(SMALL, HP, 0.5)
    assert np.array_equal(oscillating_control(g, g.g[0], 0).g, g.g)


def test_mollified_family_approaches_rough_solution():
    d, s = bump_data(), linear_sigma()
    g = bump_control(SMALL, HP, 0.5)
    rep = mollified_family_probe(d, s, g, HP, SMALL, (0.0, 1e-4, 1e-2, 0.1))
    dist = [r["dC_to_rough"] for r in rep["rows"]]
    assert dist[0] == 0 and dist[1] < dist[2] < dist[3]
    assert rep["zp_spread"] < 0.2


def test_grid_self_convergence():
    d, s = bump_data(), linear_sigma()
    coarse = Grid(3.0, 64, 1.0, 64)
    fine = Grid(3.0, 128, 1.0, 128)
    uc = solve_skeleton_direct(d, s, bump_control(coarse, HP, 0.5), HP, coarse)
    uf = solve_skeleton_direct(d, s, bump_control(fine, HP, 0.5), HP, fine)
    restricted = Field(uf.values[::2, ::2], coarse)
    assert dC_metric(uc, restricted) < 0.05 * np.abs(uc.values).max()
