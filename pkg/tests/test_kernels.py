import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from roughwave.fracspace import Field, Grid, HurstParam
from roughwave.kernels import (KernelId, box_hl, decomposition_lattice, decomposition_terms,
                               diff_h, frac_integral_box, frac_integral_D,
                               frac_integral_D_quadrature, green, j_theta_lp, j_theta_transform,
                               kernel_C, kernel_C_1malpha, kernel_E, kernel_S_alpha,
                               verify_decomposition)


def _cosine_transform(f, t, xi):
    """2 int_0^inf f(x) cos(xi x) dx for a kernel with an integrable singularity at x = t."""
    g = lambda x: f(x) * math.cos(xi * x)
    # x = t -/+ u^m flattens singularities up to |x - t|^{-1 + 1/m}
    m = 2.5
    w = lambda u: m * u ** (m - 1)
    head = integrate.quad(lambda u: g(t - u ** m) * w(u), 0, t ** (1 / m), limit=400, epsabs=1e-13)[0]
    head += integrate.quad(lambda u: g(t + u ** m) * w(u), 0, (2 * t) ** (1 / m), limit=400,
                           epsabs=1e-13)[0]
    tail = integrate.quad(f, 3 * t, np.inf, weight="cos", wvar=xi, limlst=200)[0]
    return 2 * (head + tail)


@pytest.mark.parametrize("xi", [0.7, 2.0, 5.0])
def test_fourier_transforms(xi):
    t, a = 1.0, 0.6
    assert _cosine_transform(lambda x: kernel_E(t, x), t, xi) == pytest.approx(math.exp(-t * xi), rel=1e-6)
    s = _cosine_transform(lambda x: kernel_S_alpha(t, x, a), t, xi)
    assert s == pytest.approx(math.sin(t * xi) * xi ** (-a), abs=1e-8)
    c = _cosine_transform(lambda x: kernel_C_1malpha(t, x, a), t, xi)
    assert c == pytest.approx((math.cos(t * xi) - math.exp(-t * xi)) * xi ** (-(1 - a)), abs=1e-8)


def test_green_support_and_symmetry():
    x = np.linspace(-3, 3, 61)
    G = green(1.5, x)
    assert set(np.unique(G)) <= {0.0, 0.5}
    np.testing.assert_array_equal(G, green(1.5, -x))
    assert green(1.0, 0.99) == 0.5 and green(1.0, 1.01) == 0.0 and green(0.0, 0.0) == 0.0


def test_singular_kernels_flag_characteristic():
    assert kernel_S_alpha(1.0, 1.0, 0.4) == np.inf
    assert kernel_C_1malpha(1.0, -1.0, 0.4) == np.inf
    assert kernel_C(1.0, 0.3, 0.4) == kernel_C_1malpha(1.0, 0.3, 0.6)


def test_kernel_id():
    with pytest.raises(ValueError):
        KernelId("K5")
    with pytest.raises(ValueError):
        KernelId("K1", alpha=1.0)
    assert KernelId("K3").evaluator() is green
    assert KernelId("K4").complement() is green


@given(st.floats(0.1, 3.0), st.floats(-4, 4), st.floats(-2, 2), st.floats(-2, 2))
def test_box_is_iterated_difference(t, x, h, l):
    lhs = box_hl(green, t, x, h, l)
    rhs = diff_h(green, t, x + l, h) - diff_h(green, t, x, h)
    assert lhs == pytest.approx(rhs)


@pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
def test_difference_integral_closed_form_vs_quadrature(t):
    hp = HurstParam(0.3)
    cf = (2 * t) ** 0.6 / (0.6 * 0.4)
    assert frac_integral_D(t, hp) == pytest.approx(cf, rel=1e-12)
    assert frac_integral_D_quadrature(t, hp) == pytest.approx(cf, rel=0.02)


@pytest.mark.parametrize("H", [0.3, 0.4])
def test_box_integral_scaling(H):
    hp = HurstParam(H)
    ts = np.array([0.25, 0.5, 1.0, 2.0])
    v = [frac_integral_box(t, hp) for t in ts]
    assert all(isinstance(x, float) and x > 0 for x in v)
    assert np.polyfit(np.log(ts), np.log(v), 1)[0] == pytest.approx(4 * H - 1, abs=0.05)


def test_lattice_shape():
    pts = decomposition_lattice()
    assert len(pts) == 27
    for t, s, r, x, y in pts:
        assert s < r < t
        assert abs(abs(x - y) - (t - s)) > 0.1


@pytest.mark.parametrize("alpha,beta", [(0.3, 0.7), (0.5, 0.5), (0.7, 0.3)])
def test_decomposition_reproduces_green(alpha, beta):
    for p in decomposition_lattice()[::4]:
        assert verify_decomposition(*p, alpha, beta, quad_n=24) < 5e-3


def test_decomposition_terms_rejects_bad_order():
    with pytest.raises(ValueError):
        decomposition_terms(1.0, 0.5, 0.2, 0.0, 0.0, 0.5, 0.5)


def test_j_theta_linear_in_control():
    grid = Grid(2.0, 32, 0.5, 16)
    hp = HurstParam(0.4)
    su = Field(np.ones((grid.nt + 1, grid.nx + 1)), grid)
    g = np.random.default_rng(0).standard_normal((grid.nt, grid.nx + 1))
    K = KernelId("K4")
    J1 = j_theta_transform(K, su, g, 0.3, hp, grid)
    J2 = j_theta_transform(K, su, 2 * g, 0.3, hp, grid)
    np.testing.assert_allclose(J2.values, 2 * J1.values, rtol=1e-12, atol=1e-14)
    assert np.all(J1.values[0] == 0)
    Z = j_theta_transform(K, su, np.zeros_like(g), 0.3, hp, grid)
    assert np.all(j_theta_lp(Z, 2) == 0)
    with pytest.raises(ValueError):
        j_theta_transform(K, su, g, 1.2, hp, grid)
