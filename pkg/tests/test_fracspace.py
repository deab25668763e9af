import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import special

from roughwave.fracspace import (Field, Grid, GridFunction, GridMismatch, HurstParam,
                                 c2_inner_integral, dC_from_diff, dC_metric, fbm_cell_lags,
                                 frac_seminorm_N, h_eps_inner, h_gram, h_inner_difference,
                                 h_inner_fourier, lp_norm_slices, mollifier_f_eps,
                                 mollifier_f_eps_at_zero, s2_seminorm, zp_norm)

hurst = st.floats(0.26, 0.49)


@pytest.fixture(scope="module")
def grid():
    return Grid(4.0, 128, 1.0, 32)


def test_hurst_range():
    for bad in (0.25, 0.5, 0.1, 0.7):
        with pytest.raises(ValueError):
            HurstParam(bad)


@given(hurst)
def test_c1_closed_form(H):
    hp = HurstParam(H)
    assert hp.c1 == pytest.approx(math.gamma(2 * H + 1) * math.sin(math.pi * H) / (2 * math.pi))


@given(hurst)
def test_c2_matches_gamma_closed_form(H):
    hp = HurstParam(H)
    ref = math.sqrt(H * (0.5 - H) / (math.gamma(2 * H + 1) * math.sin(math.pi * H)))
    assert hp.c2 == pytest.approx(ref, rel=1e-8)


def test_c2_inner_integral_against_plain_quadrature():
    from scipy import integrate
    H = 0.35
    f = lambda t: ((1 + t) ** (H - 0.5) - t ** (H - 0.5)) ** 2
    ref = sum(integrate.quad(f, a, b, limit=400)[0] for a, b in ((0, 1), (1, 100)))
    ref += integrate.quad(f, 100, np.inf, limit=400)[0]
    assert c2_inner_integral(H) == pytest.approx(ref, rel=1e-7)


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid(1.0, 8, 4.0, 8)          # dt > dx
    with pytest.raises(ValueError):
        Grid(-1.0, 16, 1.0, 16)
    g = Grid(2.0, 16, 1.0, 16)
    assert g.node(0.5) == 10
    with pytest.raises(ValueError):
        g.node(0.1)
    with pytest.raises(ValueError):
        g.check_light_cone(1.0)


@pytest.mark.parametrize("H", [0.3, 0.4])
@pytest.mark.parametrize("x", [0.5, 1.0, 2.0])
def test_indicator_norm_law(grid, H, x):
    hp = HurstParam(H)
    phi = GridFunction(grid.indicator(0.0, x), grid)
    assert h_inner_fourier(phi, phi, hp) == pytest.approx(x ** (2 * H), rel=1e-2)
    assert h_inner_difference(phi, phi, hp) == pytest.approx(x ** (2 * H), rel=2e-2)


@pytest.mark.parametrize("H", [0.3, 0.45])
def test_gram_is_fbm_cell_covariance(H):
    g = Grid(2.0, 32, 1.0, 16)
    hp = HurstParam(H)
    lags = fbm_cell_lags(g.nx + 1, g.dx, H)
    np.testing.assert_allclose(h_gram(g, hp)[0], lags, atol=1e-14)
    np.testing.assert_allclose(h_gram(g, hp, form="fourier")[0], lags, atol=5e-6 * lags[0])


def test_gram_positive_definite_and_readonly():
    g = Grid(2.0, 48, 1.0, 16)
    M = h_gram(g, HurstParam(0.3))
    assert np.linalg.eigvalsh(M).min() > 0
    with pytest.raises(ValueError):
        M[0, 0] = 1.0


@given(st.integers(0, 2 ** 31), hurst)
def test_inner_product_bilinear_symmetric(seed, H):
    g = Grid(2.0, 32, 1.0, 16)
    hp = HurstParam(H)
    rng = np.random.default_rng(seed)
    a, b, c = (GridFunction(rng.standard_normal(g.nx + 1), g) for _ in range(3))
    ab = h_inner_difference(a, b, hp)
    assert ab == pytest.approx(h_inner_difference(b, a, hp), rel=1e-10, abs=1e-12)
    lin = h_inner_difference(GridFunction(2 * a.values + c.values, g), b, hp)
    assert lin == pytest.approx(2 * ab + h_inner_difference(c, b, hp), rel=1e-9, abs=1e-10)
    assert h_inner_difference(a, a, hp) > 0


@given(st.integers(0, 2 ** 31))
def test_difference_and_fourier_forms_agree(seed):
    g = Grid(2.0, 32, 1.0, 16)
    hp = HurstParam(0.4)
    v = np.random.default_rng(seed).standard_normal(g.nx + 1)
    phi = GridFunction(v, g)
    # quadrature error of the Fourier Gram: ||F - D||_2 / lambda_min(D) ~ 7e-5 on this grid
    assert h_inner_fourier(phi, phi, hp) == pytest.approx(h_inner_difference(phi, phi, hp), rel=1e-4)


def test_grid_mismatch_rejected():
    a = GridFunction(np.ones(17), Grid(2.0, 16, 1.0, 16))
    b = GridFunction(np.ones(33), Grid(2.0, 32, 1.0, 32))
    with pytest.raises(GridMismatch):
        h_inner_difference(a, b, HurstParam(0.3))


@given(st.integers(0, 2 ** 31), st.floats(0.3, 0.45))
def test_mollified_norm_non_increasing(seed, H):
    g = Grid(2.0, 32, 1.0, 16)
    hp = HurstParam(H)
    phi = GridFunction(np.random.default_rng(seed).standard_normal(g.nx + 1), g)
    v = [h_eps_inner(phi, phi, hp, e) for e in (0.0, 0.01, 0.1, 1.0)]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(v, v[1:]))


def test_mollified_limit_is_rough_product(grid):
    hp = HurstParam(0.35)
    phi = GridFunction(grid.indicator(-0.5, 1.0), grid)
    rough = h_inner_fourier(phi, phi, hp)
    eps = np.array([1e-10, 1e-8, 1e-6])
    gap = np.array([rough - h_eps_inner(phi, phi, hp, e) for e in eps])
    assert np.all(gap > 0) and gap[0] < 1e-3 * rough
    # a jump gives a spectral tail |xi|^{-1-2H}, so the gap closes like eps^H
    slope = np.polyfit(np.log(eps), np.log(gap), 1)[0]
    assert slope == pytest.approx(hp.H, abs=0.03)


@pytest.mark.parametrize("H", [0.3, 0.45])
@pytest.mark.parametrize("eps", [0.25, 1.0, 4.0])
def test_mollifier_at_zero(H, eps):
    hp = HurstParam(H)
    assert mollifier_f_eps(0.0, hp, eps) == pytest.approx(mollifier_f_eps_at_zero(hp, eps), rel=1e-6)


@pytest.mark.parametrize("x", [0.3, 1.0, 2.5])
def test_mollifier_against_kummer_function(x):
    # (1/pi) int_0^inf cos(k x) e^{-eps k^2} k^a dk = Gamma(b) eps^{-b} 1F1(b; 1/2; -x^2/4eps) / (2 pi)
    H, eps = 0.35, 0.5
    b = (2 - 2 * H) / 2
    ref = math.gamma(b) * eps ** (-b) * special.hyp1f1(b, 0.5, -x * x / (4 * eps)) / (2 * math.pi)
    assert mollifier_f_eps(x, HurstParam(H), eps) == pytest.approx(ref, rel=1e-7, abs=1e-12)


def test_seminorm_of_constant_vanishes_and_scales():
    g = Grid(2.0, 32, 1.0, 16)
    hp = HurstParam(0.3)
    w = np.ones((3, g.nx + 1))
    np.testing.assert_allclose(s2_seminorm(w, g, hp), 0, atol=1e-14)
    f = GridFunction(np.sin(g.x), g)
    np.testing.assert_allclose(frac_seminorm_N(GridFunction(3 * f.values, g), hp),
                               3 * frac_seminorm_N(f, hp), rtol=1e-12)


def test_lp_and_zp_norms():
    g = Grid(2.0, 32, 1.0, 16)
    u = Field(np.ones((g.nt + 1, g.nx + 1)), g)
    np.testing.assert_allclose(lp_norm_slices(u.values, g, 2), 2.0, rtol=1e-12)   # sqrt(4)
    assert zp_norm(u, 2, HurstParam(0.3)) == pytest.approx(2.0, rel=1e-12)
    with pytest.raises(ValueError):
        zp_norm(u, 1.5, HurstParam(0.3))


@given(st.integers(0, 2 ** 31))
def test_dC_is_a_bounded_metric(seed):
    g = Grid(3.0, 24, 1.0, 8)
    rng = np.random.default_rng(seed)
    u, v, w = (Field(rng.standard_normal((g.nt + 1, g.nx + 1)), g) for _ in range(3))
    duv = dC_metric(u, v)
    assert duv == pytest.approx(dC_metric(v, u))
    assert dC_metric(u, u) == 0
    assert duv <= dC_metric(u, w) + dC_metric(w, v) + 1e-14
    assert 0 < duv <= 1.0


def test_dC_batched_matches_single():
    g = Grid(3.0, 24, 1.0, 8)
    d = np.random.default_rng(0).uniform(0, 1, (5, g.nt + 1, g.nx + 1))
    np.testing.assert_allclose(dC_from_diff(d, g), [dC_from_diff(x, g) for x in d])
