import math

import numpy as np
import pytest

from roughwave.fracspace import Grid, HurstParam
from roughwave.ldp import (EventSpec, OptConfig, condition_b_probe, control_basis, energy_matrix,
                           mc_tail, rate_minimize, tail_margins)
from roughwave.noise import NoiseSpec, sample_noise_batch
from roughwave.skeleton import Control, bump_control, solve_skeleton_direct
from roughwave.swe import bump_data, initial_term_I0, linear_sigma, solve_batch

SMALL = Grid(3.0, 32, 1.0, 32)
HP = HurstParam(0.4)
DATA, SIG = bump_data(), linear_sigma()
CENTRE = 0.75       # a node with I0(T, x) = u0(x - 1) / 2 > 0 on the standard bump


def level_at(x, offset, grid=SMALL):
    return float(initial_term_I0(DATA, grid).values[-1, grid.node(x)]) + offset


def test_event_validation_and_margin():
    with pytest.raises(ValueError):
        EventSpec("cross", 0.0, 1.0)
    with pytest.raises(ValueError):
        EventSpec("terminal_point_level", 0.0, math.inf)
    u = np.zeros((2, SMALL.nt + 1, SMALL.nx + 1))
    u[1, -1, SMALL.node(0.75)] = 2.0
    ev = EventSpec("sup_level", 0.0, 1.0, nodes=(0.0, 0.75))
    np.testing.assert_array_equal(ev.margin(u, SMALL), [-1.0, 1.0])


def test_basis_energy_matrix_consistent():
    ev = EventSpec("terminal_point_level", 0.0, 1.0)
    B = control_basis(SMALL, ev, 4, 5)
    A = energy_matrix(B, SMALL, HP)
    c = np.random.default_rng(0).standard_normal(20)
    g = Control(np.tensordot(c, B, axes=1), SMALL)
    assert 0.5 * c @ A @ c == pytest.approx(g.energy(HP), rel=1e-10)
    with pytest.raises(ValueError):
        OptConfig(nc_t=13, nc_x=12)


@pytest.mark.parametrize("offset", [0.0, -0.3])
def test_zero_energy_when_zero_control_suffices(offset):
    ev = EventSpec("terminal_point_level", CENTRE, level_at(CENTRE, offset))
    r = rate_minimize(ev, DATA, SIG, HP, SMALL)
    assert r.energy == 0 and r.feasible and not np.any(r.g_star.g)


@pytest.fixture(scope="module")
def ladder():
    cfg = OptConfig(nc_t=5, nc_x=5)
    out = {}
    for off in (0.05, 0.1, 0.2):
        ev = EventSpec("terminal_point_level", CENTRE, level_at(CENTRE, off))
        out[off] = (ev, rate_minimize(ev, DATA, SIG, HP, SMALL, cfg))
    return out


def test_rate_result_feasible_and_positive(ladder):
    for off, (ev, r) in ladder.items():
        assert r.feasible and r.energy > 0 and r.constraint_residual <= 1e-3
        u = solve_skeleton_direct(DATA, SIG, r.g_star, HP, SMALL)
        assert ev.margin(u.values, SMALL) >= -1e-3
        assert r.g_star.energy(HP) == pytest.approx(r.energy, rel=1e-8)


def test_energy_monotone_and_quadratic_in_offset(ladder):
    e = [ladder[o][1].energy for o in (0.05, 0.1, 0.2)]
    assert e[0] < e[1] < e[2]
    for a, b in zip(e, e[1:]):
        assert b / a == pytest.approx(4.0, rel=0.25)


def test_tail_sure_and_impossible_events():
    sure = EventSpec("terminal_point_level", 0.0, -1e6)
    t = mc_tail(sure, DATA, SIG, HP, SMALL, [0.5, 0.1], 1000, seed=0)
    assert t.p_hat == [1.0, 1.0] and max(t.r_hat) < 1e-3 and not any(t.zero_hit)
    never = EventSpec("terminal_point_level", 0.0, 1e6)
    t = mc_tail(never, DATA, SIG, HP, SMALL, [0.5, 0.1], 1000, seed=0)
    assert all(t.zero_hit) and t.p_hat == [0.0, 0.0]
    assert t.r_hat[0] == pytest.approx(-0.5 * math.log(0.5 / 1001))


def test_tail_validation():
    ev = EventSpec("terminal_point_level", 0.0, 0.5)
    with pytest.raises(ValueError):
        mc_tail(ev, DATA, SIG, HP, SMALL, [0.5], 999, 0)
    with pytest.raises(ValueError):
        mc_tail(ev, DATA, SIG, HP, SMALL, [0.1, 0.5], 1000, 0)


def test_tail_deterministic_and_parallel_consistent():
    ev = EventSpec("terminal_point_level", 0.0, 0.2)
    a = mc_tail(ev, DATA, SIG, HP, SMALL, [0.5, 0.2], 1000, seed=9)
    b = mc_tail(ev, DATA, SIG, HP, SMALL, [0.5, 0.2], 1000, seed=9, jobs=2)
    assert a.p_hat == b.p_hat and a.r_hat == b.r_hat


def test_event_nesting_is_exact_under_common_random_numbers():
    m = tail_margins(EventSpec("terminal_point_level", 0.0, 0.0), DATA, SIG, HP, SMALL, 0.3,
                     1000, seed=4)
    hits = [int(np.count_nonzero(m + 0.0 - a >= 0)) for a in (0.0, 0.1, 0.2, 0.4)]
    assert hits == sorted(hits, reverse=True)
    for a in (0.1, 0.2):
        ma = tail_margins(EventSpec("terminal_point_level", 0.0, a), DATA, SIG, HP, SMALL, 0.3,
                          1000, seed=4)
        np.testing.assert_allclose(ma, m - a, atol=1e-15)


def test_variance_doubles_with_eps():
    n = 4000
    j = SMALL.node(0.0)
    v = []
    for e, seed in ((0.01, 1), (0.02, 2)):
        dW = sample_noise_batch(NoiseSpec(HP, SMALL, seed), range(n))
        v.append(solve_batch(DATA, SIG, e, dW, SMALL, HP)[:, -1, j].var(ddof=1))
    ratio = v[1] / v[0]
    assert abs(ratio - 2) < 4 * ratio * math.sqrt(4 / (n - 1))


def test_condition_b_probe_trivial_rows():
    g = bump_control(SMALL, HP, 0.5)
    rep = condition_b_probe(g, [0.0], DATA, SIG, HP, SMALL, 200)
    assert rep["rows"][0]["mean_dC"] == 0
    rep = condition_b_probe(g, [0.5, 0.1], DATA, SIG, HP, SMALL, 200, deltas=(1e3,))
    assert all(r["prob"][1e3] == 0 for r in rep["rows"])
    with pytest.raises(ValueError):
        condition_b_probe(bump_control(SMALL, HP, 2.0), [0.1], DATA, SIG, HP, SMALL, 10, N=1.0)
    with pytest.raises(ValueError):
        condition_b_probe([g, g], [0.1], DATA, SIG, HP, SMALL, 10)


def test_condition_b_probe_decreasing_discrepancy():
    g = bump_control(SMALL, HP, 0.5)
    rep = condition_b_probe([g, g.scaled(0.5), g], [0.5, 0.1, 0.02], DATA, SIG, HP, SMALL, 300)
    means = [r["mean_dC"] for r in rep["rows"]]
    assert means[0] > means[1] > means[2]
