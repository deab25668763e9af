"""Wave Green's function, the fractional kernels of its four-term decomposition, and
the fractional difference integrals of G.

Fourier transforms (in x) of the kernels, with F f(xi) = int f(x) e^{-i xi x} dx:

    S_a(t)     -> sin(t|xi|) |xi|^{-a}
    C_{1-a}(t) -> (cos(t|xi|) - e^{-t|xi|}) |xi|^{-(1-a)}
    E(t)       -> e^{-t|xi|}

so the decomposition of G(t-s) = S_1(t-s) is the addition formula for sin.
"""
from __future__ import annotations

from dataclasses import dataclass
import math

import numpy as np
from scipy import integrate

from .fracspace import Field, Grid, HurstParam, h_gram

KERNEL_TAGS = ("K1", "K2", "K3", "K4")


def green(t, x):
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    out = np.where((t > 0) & (np.abs(x) < t), 0.5, 0.0)
    return float(out) if out.ndim == 0 else out


def kernel_E(t, x):
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    out = t / (np.pi * (t * t + x * x))
    return float(out) if out.ndim == 0 else out


def kernel_S_alpha(t, x, alpha):
    """Returns inf on the characteristic |x| = t, where the kernel is singular."""
    t = np.asarray(t, dtype=float)
    ax = np.abs(np.asarray(x, dtype=float))
    c = math.gamma(1 - alpha) / (2 * math.pi) * math.cos(alpha * math.pi / 2)
    d = t - ax
    with np.errstate(divide="ignore", invalid="ignore"):
        out = c * ((t + ax) ** (alpha - 1) + np.sign(d) * np.abs(d) ** (alpha - 1))
    out = np.where(d == 0, np.inf, out)
    return float(out) if out.ndim == 0 else out


def kernel_C_1malpha(t, x, alpha):
    """C_{1-alpha}; inf on the characteristic |x| = t."""
    t = np.asarray(t, dtype=float)
    ax = np.abs(np.asarray(x, dtype=float))
    d = np.abs(t - ax)
    with np.errstate(divide="ignore"):
        out = math.gamma(alpha) / (2 * math.pi) * (
            math.cos(alpha * math.pi / 2) * ((t + ax) ** (-alpha) + d ** (-alpha))
            - 2 * np.cos(alpha * np.arctan2(ax, t)) * (t * t + ax * ax) ** (-alpha / 2))
    out = np.where(d == 0, np.inf, out)
    return float(out) if out.ndim == 0 else out


def kernel_C(t, x, gamma_):
    """C_gamma, i.e. the C_{1-alpha} formula with alpha = 1 - gamma."""
    return kernel_C_1malpha(t, x, 1 - gamma_)


@dataclass(frozen=True)
class KernelId:
    tag: str
    alpha: float = 0.5
    beta: float = 0.5

    def __post_init__(self):
        if self.tag not in KERNEL_TAGS:
            raise ValueError(f"tag must be one of {KERNEL_TAGS}")
        if not (0 < self.alpha < 1 and 0 < self.beta < 1):
            raise ValueError("alpha and beta must lie in (0, 1)")

    def evaluator(self):
        """The kernel K_i as a function of (t, x)."""
        a = self.alpha
        return {"K1": lambda t, x: kernel_C(t, x, a),
                "K2": lambda t, x: kernel_S_alpha(t, x, a),
                "K3": green,
                "K4": kernel_E}[self.tag]

    def complement(self):
        a = self.alpha
        return {"K1": lambda t, x: kernel_S_alpha(t, x, 1 - a),
                "K2": lambda t, x: kernel_C_1malpha(t, x, a),
                "K3": kernel_E,
                "K4": green}[self.tag]


def diff_h(kernel, t, x, h):
    return kernel(t, np.asarray(x) + h) - kernel(t, x) if h != 0 else 0.0 * np.asarray(x, dtype=float)


def box_hl(kernel, t, x, h, l):
    x = np.asarray(x, dtype=float)
    return kernel(t, x + h + l) - kernel(t, x + h) - kernel(t, x + l) + kernel(t, x)


# ---------------------------------------------------------------------------
# decomposition check

def _panel_nodes(n: int):
    # Gauss-Legendre on (0,1) pushed towards both ends by B(v) = v^4 / (v^4 + (1-v)^4)
    v, w = np.polynomial.legendre.leggauss(n)
    v = 0.5 * (v + 1)
    w = 0.5 * w
    a, b = v ** 4, (1 - v) ** 4
    B = a / (a + b)
    dB = 4 * (v ** 3 * b + a * (1 - v) ** 3) / (a + b) ** 2
    return B, w * dB


def _tail_nodes(n: int, ell: float):
    # z = ell v^4 / (1 - v)^2 on (0, inf): clusters at the breakpoint, algebraic decay at infinity
    v, w = np.polynomial.legendre.leggauss(n)
    v = 0.5 * (v + 1)
    w = 0.5 * w
    z = ell * v ** 4 / (1 - v) ** 2
    dz = ell * (4 * v ** 3 / (1 - v) ** 2 + 2 * v ** 4 / (1 - v) ** 3)
    return z, w * dz


def _line_integral(f, breaks, quad_n: int) -> float:
    """int_R f(z) dz with f singular only at ``breaks``.

    Every breakpoint gets two mirror-image panels of equal width, so sgn(u)/|u| type
    singularities (coinciding characteristics) cancel in the principal-value sense.
    """
    br = np.unique(np.asarray(breaks, dtype=float))
    span = max(br[-1] - br[0], 1.0)
    gaps = np.diff(br)
    left = np.concatenate([[span], gaps])
    right = np.concatenate([gaps, [span]])
    delta = 0.5 * np.minimum(left, right)
    edges = np.unique(np.concatenate([br, br - delta, br + delta]))
    u, wu = _panel_nodes(quad_n)
    zt, wt = _tail_nodes(quad_n, span)
    zs = [edges[0] - zt, edges[-1] + zt]
    ws = [wt, wt]
    for lo, hi in zip(edges[:-1], edges[1:]):
        zs.append(lo + (hi - lo) * u)
        ws.append((hi - lo) * wu)
    z = np.concatenate(zs)
    w = np.concatenate(ws)
    with np.errstate(all="ignore"):
        val = f(z)
    ok = np.isfinite(val)
    return float(np.dot(w[ok], val[ok]))


def decomposition_terms(t, s, r, x, y, alpha, beta, quad_n=64) -> np.ndarray:
    """The four z-integrals whose sum is G(t-s, x-y)."""
    if not (s < r < t):
        raise ValueError("need s < r < t")
    a, b = t - r, r - s
    breaks = [x - a, x, x + a, y - b, y, y + b]
    pairs = [
        (lambda z: kernel_C(a, x - z, beta), lambda z: kernel_S_alpha(b, z - y, 1 - beta)),
        (lambda z: kernel_S_alpha(a, x - z, alpha), lambda z: kernel_C_1malpha(b, z - y, alpha)),
        (lambda z: green(a, x - z), lambda z: kernel_E(b, z - y)),
        (lambda z: kernel_E(a, x - z), lambda z: green(b, z - y)),
    ]
    return np.array([_line_integral(lambda z, p=p, q=q: p(z) * q(z), breaks, quad_n)
                     for p, q in pairs])


def verify_decomposition(t, s, r, x, y, alpha, beta, quad_n=64) -> float:
    """|sum of the four z-integrals - G(t-s, x-y)|."""
    return abs(decomposition_terms(t, s, r, x, y, alpha, beta, quad_n).sum() - green(t - s, x - y))


def decomposition_lattice(tau=(0.5, 1.0, 2.0), r_frac=(0.2, 0.45, 0.7), d_frac=(0.0, 0.3, 1.6)):
    """27 interior points (t, s, r, x, y) with t - s = tau, r = s + r_frac tau, x - y = d_frac tau.

    The offsets keep |x - y| away from t - s (the jump of G) and from |(t-r) - (r-s)|,
    where the characteristics of the two factors would coincide.
    """
    pts = []
    for T in tau:
        for rf in r_frac:
            for df in d_frac:
                pts.append((T, 0.0, rf * T, df * T, 0.0))
    return pts


# ---------------------------------------------------------------------------
# fractional difference integrals of G

def frac_integral_D(t: float, hp: HurstParam) -> float:
    """int int |D_h G(t,x)|^2 |h|^{2H-2} dh dx = (2t)^{2H} / (2H (1-2H)).

    Uses int |D_h G(t,.)|^2 dx = min(|h|, 2t) / 2, then integrates in h in closed form.
    """
    if t <= 0:
        raise ValueError("t must be > 0")
    H = hp.H
    return (2 * t) ** (2 * H) / (2 * H * (1 - 2 * H))


def _x_integral_breakpoints(t: float, shifts, signs) -> float:
    """int (sum_k signs_k G(t, x + shifts_k))^2 dx by exact piecewise-constant summation."""
    pts = np.sort(np.concatenate([[-t - s, t - s] for s in shifts]))
    mids = 0.5 * (pts[:-1] + pts[1:])
    vals = sum(sg * green(t, mids + s) for s, sg in zip(shifts, signs))
    return float(np.sum(np.diff(pts) * vals ** 2))


def frac_integral_D_quadrature(t: float, hp: HurstParam) -> float:
    """Independent 2-D evaluation: exact x-sums of the indicator, adaptive quadrature in h."""
    if t <= 0:
        raise ValueError("t must be > 0")
    p = 2 * hp.H - 2
    A = lambda h: _x_integral_breakpoints(t, (h, 0.0), (1, -1))
    # A(h) ~ h at 0; h = u^m with m = 1/(2H) makes the integrand bounded
    m = 1 / (2 * hp.H)
    head = integrate.quad(lambda u: m * A(u ** m) * u ** (m * (p + 1) - 1), 0, (2 * t) ** (1 / m),
                          epsabs=0, epsrel=1e-12, limit=200)[0]
    tail = integrate.quad(lambda h: A(h) * h ** p, 2 * t, np.inf, epsabs=0, epsrel=1e-10, limit=200)[0]
    return 2 * (head + tail)


def _overlap(d, t):
    return np.maximum(0.0, 2 * t - np.abs(d))


def _box_x_integral(y, h, t):
    """int |box_{y,h} G(t,x)|^2 dx; each product of indicators integrates to an overlap length."""
    s = (0.0, y, h, y + h)
    sg = (1.0, -1.0, -1.0, 1.0)
    tot = 0.0
    for k in range(4):
        for m in range(4):
            tot = tot + sg[k] * sg[m] * _overlap(s[k] - s[m], t)
    return 0.25 * tot


def _pl_power_integral(a, b, Fa, Fb, p):
    """int_a^b F h^p dh with F linear from Fa to Fb, 0 <= a < b."""
    beta = (Fb - Fa) / (b - a)
    alpha = Fa - beta * a
    lo2 = a ** (p + 2)
    v = beta * (b ** (p + 2) - lo2) / (p + 2)
    if alpha != 0:
        v += alpha * (b ** (p + 1) - a ** (p + 1)) / (p + 1)
    return v


def _box_inner(y: float, t: float, H: float) -> float:
    """int |h|^{2H-2} int |box_{y,h} G|^2 dx dh, exact: the x-integral is piecewise linear in h."""
    p = 2 * H - 2
    ay = abs(y)
    cand = np.array([0.0, 2 * t, ay, ay + 2 * t, abs(ay - 2 * t)])
    total = 0.0
    for sgn in (1.0, -1.0):
        br = np.unique(cand)
        F = np.array([_box_x_integral(y, sgn * hh, t) for hh in br])
        for a, b, Fa, Fb in zip(br[:-1], br[1:], F[:-1], F[1:]):
            total += _pl_power_integral(a, b, Fa, Fb, p)
        R = br[-1]
        total += F[-1] * R ** (p + 1) / (-(p + 1))
    return total


def frac_integral_box(t: float, hp: HurstParam) -> float:
    """int int int |box_{y,h} G(t,x)|^2 |y|^{2H-2} |h|^{2H-2} dy dh dx.

    Exact in x and h; adaptive quadrature in y with the algebraic weight at 0.
    """
    if t <= 0:
        raise ValueError("t must be > 0")
    H = hp.H
    p = 2 * H - 2
    I = lambda y: _box_inner(y, t, H)
    far = 2 * frac_integral_D(t, hp)   # limit of I(y) as |y| -> inf
    # I(y) = c y^{2H} + O(y) at 0.  Below y0 the overlap lengths lose precision, so
    # [0, y0] uses the leading term; above it y = u^m, m = 1/(4H-1), keeps things bounded.
    y0 = 1e-6 * t
    c0 = I(y0) / y0 ** (2 * H)
    m = 1 / (4 * H - 1)
    near = c0 * y0 ** (4 * H - 1) / (4 * H - 1)
    near += integrate.quad(lambda u: m * I(u ** m) * u ** (m * (p + 1) - 1), y0 ** (1 / m),
                           (2 * t) ** (1 / m), epsabs=0, epsrel=1e-10, limit=200)[0]
    mid = integrate.quad(lambda y: I(y) * y ** p, 2 * t, 8 * t, points=[4 * t], epsabs=0,
                         epsrel=1e-10, limit=200)[0]
    tail = integrate.quad(lambda y: (I(y) - far) * y ** p, 8 * t, np.inf, epsabs=1e-14,
                          epsrel=1e-10, limit=400)[0]
    tail += far * (8 * t) ** (p + 1) / (-(p + 1))
    return float(2 * (near + mid + tail))


# ---------------------------------------------------------------------------
# J_theta transform

def _kernel_cells(kernel, tau: float, dz: np.ndarray, dx: float) -> np.ndarray:
    with np.errstate(all="ignore"):
        K = kernel(tau, dz)
    bad = ~np.isfinite(K)
    if bad.any():
        # a cell midpoint sits on the characteristic: average over the two quarter points
        with np.errstate(all="ignore"):
            alt = 0.5 * (kernel(tau, dz[bad] - dx / 4) + kernel(tau, dz[bad] + dx / 4))
        K[bad] = alt
    return K


def j_theta_transform(K: KernelId, sigma_u: Field, g: np.ndarray, theta: float, hp: HurstParam,
                      grid: Grid, eps: float = 0.0) -> Field:
    """J(r, z) = int_0^r (r-s)^{-theta} <K(r-s, z - .) sigma_u(s, .), g(s, .)>_{H_eps} ds.

    Left-point rule in s, kernel sampled at cell midpoints, inner product through the
    cell Gram matrix.  ``g`` has shape (nt, nx+1).
    """
    if not (0 < theta < 1):
        raise ValueError("theta must lie in (0, 1)")
    g = np.asarray(g, dtype=float)
    if g.shape != (grid.nt, grid.nx + 1):
        raise ValueError("control shape does not match grid")
    kern = K.evaluator()
    M = h_gram(grid, hp, eps, form="difference" if eps == 0 else "fourier")
    Mg = g @ M                                    # (nt, nx+1)
    x = grid.x
    dz = x[:, None] - (x[None, :] + 0.5 * grid.dx)
    su = sigma_u.values
    J = np.zeros((grid.nt + 1, grid.nx + 1))
    cache = {}
    for i in range(1, grid.nt + 1):
        for m in range(i):
            lag = i - m
            if lag not in cache:
                cache[lag] = _kernel_cells(kern, lag * grid.dt, dz, grid.dx)
            J[i] += (lag * grid.dt) ** (-theta) * grid.dt * (cache[lag] @ (su[m] * Mg[m]))
    return Field(J, grid)


def j_theta_lp(J: Field, p: float) -> np.ndarray:
    """int |J(r, z)|^p dz per time r (trapezoid)."""
    w = np.full(J.grid.nx + 1, J.grid.dx)
    w[0] = w[-1] = J.grid.dx / 2
    return np.abs(J.values) ** p @ w
