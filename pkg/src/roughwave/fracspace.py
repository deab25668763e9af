"""Fractional function space H, its mollified family H_eps, and the norms used on grids.

Two reconstructions of nodal data are used, and every routine says which:

* inner products (``h_inner_*``, ``h_gram``) read a nodal array as a *cell-wise
  constant* function, value ``phi[j]`` on ``[x_j, x_j + dx)``, zero outside.
  Cell indicators then have the exact fBm increment covariance, which is what the
  noise sampler and the Walsh sums use.
* the seminorms (``frac_seminorm_N``, ``zp_norm``, ``s2_seminorm``) read nodal fields
  as *piecewise linear* and restrict to pairs of points inside ``[-L, L]``, so a
  constant field has zero seminorm.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
import math

import numpy as np
from scipy import integrate, special
from scipy.linalg import toeplitz


class GridMismatch(ValueError):
    pass


@dataclass(frozen=True)
class HurstParam:
    """Hurst index H in (1/4, 1/2) with the spectral constants.

    ``c1`` normalises the spectral measure, ``c2`` is the difference-form constant as
    printed in the source (kept for reference), and ``c_diff = H(1-2H)/2`` is the
    constant that actually makes the difference form equal the Fourier form.
    """

    H: float
    c1: float = field(init=False)
    c2: float = field(init=False)
    c_diff: float = field(init=False)

    def __post_init__(self):
        H = float(self.H)
        if not (0.25 < H < 0.5):
            raise ValueError(f"H must lie in (1/4, 1/2), got {H}")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "c1", math.gamma(2 * H + 1) * math.sin(math.pi * H) / (2 * math.pi))
        inner = c2_inner_integral(H)
        c2 = math.sqrt(H * (0.5 - H)) / math.gamma(H + 0.5) * math.sqrt(inner + 1.0 / (2 * H))
        object.__setattr__(self, "c2", c2)
        object.__setattr__(self, "c_diff", H * (1 - 2 * H) / 2)


def c2_inner_integral(H: float, tol: float = 1e-12) -> float:
    """int_0^inf [(1+t)^(H-1/2) - t^(H-1/2)]^2 dt.

    Adaptive quadrature on [0, 1] and [1, 2]; on [2, inf) the integrand is expanded
    as a binomial series in 1/t and integrated term by term.
    """
    a = H - 0.5

    def f(t):
        return ((1 + t) ** a - t ** a) ** 2

    head = integrate.quad(f, 0, 1, epsabs=0, epsrel=1e-13, limit=200)[0]
    head += integrate.quad(f, 1, 2, epsabs=0, epsrel=1e-13)[0]
    # (1+t)^a - t^a = t^a sum_{k>=1} binom(a,k) t^-k
    K = 80
    b = np.array([special.binom(a, k) for k in range(K + 1)])
    b[0] = 0.0
    tail = 0.0
    for m in range(2, 2 * K + 1):
        lo, hi = max(1, m - K), min(K, m - 1)
        if lo > hi:
            continue
        d = float(np.dot(b[lo:hi + 1], b[m - hi:m - lo + 1][::-1]))
        term = d * 2.0 ** (2 * a - m + 1) / (m - 1 - 2 * a)
        tail += term
        if m > 10 and abs(term) < tol * abs(tail):
            break
    return head + tail


@dataclass(frozen=True)
class Grid:
    """Uniform lattice: nodes x_j = -L + j dx (j = 0..nx), t_i = i dt (i = 0..nt)."""

    L: float
    nx: int
    T: float
    nt: int

    def __post_init__(self):
        if self.L <= 0 or self.T <= 0:
            raise ValueError("L and T must be positive")
        if self.nx < 8 or self.nt < 8:
            raise ValueError("nx and nt must be >= 8")
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "T", float(self.T))
        object.__setattr__(self, "nx", int(self.nx))
        object.__setattr__(self, "nt", int(self.nt))
        if self.dt > self.dx * (1 + 1e-12):
            raise ValueError(f"need dt <= dx, got dt={self.dt}, dx={self.dx}")

    @property
    def dx(self) -> float:
        return 2 * self.L / self.nx

    @property
    def dt(self) -> float:
        return self.T / self.nt

    @property
    def x(self) -> np.ndarray:
        return -self.L + self.dx * np.arange(self.nx + 1)

    @property
    def t(self) -> np.ndarray:
        return self.dt * np.arange(self.nt + 1)

    @property
    def x_mid(self) -> np.ndarray:
        """Midpoints of the nx cells [x_k, x_{k+1})."""
        return -self.L + self.dx * (np.arange(self.nx) + 0.5)

    def node(self, x: float) -> int:
        j = int(round((x + self.L) / self.dx))
        if not (0 <= j <= self.nx) or abs(self.x[j] - x) > 1e-9 * max(1.0, abs(x)):
            raise ValueError(f"{x} is not a grid node")
        return j

    def check_light_cone(self, support_radius: float) -> None:
        if self.L < 2 * self.T + support_radius - 1e-12:
            raise ValueError(
                f"L={self.L} too small: need L >= 2T + support radius = {2 * self.T + support_radius}")

    def indicator(self, a: float, b: float) -> np.ndarray:
        """Nodal samples of 1_[a, b); exact as a cell function when a, b are nodes."""
        x = self.x
        tol = 1e-9 * self.dx
        return ((x >= a - tol) & (x < b - tol)).astype(float)

    def to_dict(self) -> dict:
        return {"L": self.L, "nx": self.nx, "T": self.T, "nt": self.nt}


@dataclass(frozen=True, eq=False)
class GridFunction:
    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.nx + 1,):
            raise ValueError(f"expected {self.grid.nx + 1} nodal values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite entries in grid function")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True, eq=False)
class Field:
    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        g = self.grid
        if v.shape != (g.nt + 1, g.nx + 1):
            raise ValueError(f"expected shape {(g.nt + 1, g.nx + 1)}, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite entries in field")
        object.__setattr__(self, "values", v)

    def slice(self, i: int) -> GridFunction:
        return GridFunction(self.values[i], self.grid)


def _same_grid(*objs) -> Grid:
    g = objs[0].grid
    for o in objs[1:]:
        if o.grid != g:
            raise GridMismatch("operands live on different grids")
    return g


# ---------------------------------------------------------------------------
# inner products of cell-wise constant functions

def _fft_size(n: int, pad: int, period: float, eps: float) -> int:
    N = 1 << int(math.ceil(math.log2(max(pad, 4) * n)))
    if eps > 0:
        # resolve the Gaussian damping: dxi * sqrt(eps) <= 0.1
        need = period * math.sqrt(eps) / 0.1
        N = max(N, 1 << int(math.ceil(math.log2(max(need, 1.0)))))
    if N > 1 << 24:
        raise ValueError("frequency grid too large for this eps")
    return N


def _folded_weight(xi: np.ndarray, dx: float, H: float, eps: float) -> np.ndarray:
    """sum_n sinc^2 |xi + nP|^(1-2H) e^{-eps (xi+nP)^2}, scaled so that the integrand is
    |sum_j phi_j e^{-i xi x_j}|^2 times this weight, for xi in [0, P), P = 2 pi / dx."""
    P = 2 * math.pi / dx
    s = 1 + 2 * H
    out = np.zeros_like(xi)
    pos = xi > 0
    y = xi[pos]
    if eps == 0:
        S = P ** (-s) * (special.zeta(s, y / P) + special.zeta(s, 1 - y / P))
    else:
        nmax = int(math.ceil(math.sqrt(50.0 / eps) / P)) + 2
        n = np.arange(-nmax, nmax + 1)[:, None]
        z = y[None, :] + n * P
        S = (np.abs(z) ** (-s) * np.exp(-eps * z * z)).sum(axis=0)
    out[pos] = 4 * np.sin(y * dx / 2) ** 2 * S
    return out


def _cusp_correction(g0: float, dxi: float, H: float) -> float:
    # trapezoid error of |xi|^a g(xi) at the origin (two-sided): 2 zeta(-a) g(0) h^(1+a)
    a = 1 - 2 * H
    return 2 * special.zeta(-a) * g0 * dxi ** (1 + a)


def h_eps_inner(phi: GridFunction, psi: GridFunction, hp: HurstParam, eps: float = 0.0,
                pad: int = 4) -> float:
    """c1 int F(phi) conj F(psi) e^{-eps xi^2} |xi|^{1-2H} dxi via a zero-padded FFT.

    The aliased tail above the Nyquist frequency is folded back analytically, and the
    cusp of |xi|^{1-2H} at the origin gets its Euler-Maclaurin correction.
    """
    if eps < 0:
        raise ValueError("eps must be >= 0")
    g = _same_grid(phi, psi)
    n = g.nx + 1
    P = 2 * math.pi / g.dx
    N = _fft_size(n, pad, P, eps)
    dxi = P / N
    xi = np.arange(N) * dxi
    A = np.fft.fft(phi.values, N)
    B = np.fft.fft(psi.values, N)
    prod = A * np.conj(B)
    val = np.sum(prod.real * _folded_weight(xi, g.dx, hp.H, eps)) * dxi
    val -= _cusp_correction(prod[0].real * g.dx ** 2, dxi, hp.H)
    return float(hp.c1 * val)


def h_inner_fourier(phi: GridFunction, psi: GridFunction, hp: HurstParam, pad: int = 4) -> float:
    return h_eps_inner(phi, psi, hp, 0.0, pad=pad)


def fourier_resolution(grid: Grid, pad: int = 4, eps: float = 0.0) -> float:
    """Frequency spacing used by the FFT route; recorded in run manifests."""
    P = 2 * math.pi / grid.dx
    return P / _fft_size(grid.nx + 1, pad, P, eps)


@lru_cache(maxsize=64)
def _diff_shift_weights(dx: float, H: float, S: int) -> tuple[np.ndarray, float]:
    """Weights W_s, s = 1..S, and the tail factor such that
    int_0^inf A(y) y^{2H-2} dy = sum_s W_s A_s + tail * A_S
    for A linear between integer shifts, A(0) = 0 and A constant beyond S dx."""
    p1 = 2 * H - 1
    p2 = 2 * H
    s = np.arange(1, S + 1, dtype=float)
    up, lo = s * dx, (s - 1) * dx
    I0 = np.empty(S)
    I0[0] = np.inf
    I0[1:] = (up[1:] ** p1 - lo[1:] ** p1) / p1
    I1 = (up ** p2 - lo ** p2) / (p2 * dx)
    # interval s contributes to A_s with I1 - (s-1) I0 and to A_{s-1} with s I0 - I1
    right = I1.copy()
    right[1:] -= (s[1:] - 1) * I0[1:]
    left = np.zeros(S)
    left[:-1] = s[1:] * I0[1:] - I1[1:]
    W = right + left
    tail = (S * dx) ** p1 / (1 - 2 * H)
    return W, tail


def h_inner_difference(phi: GridFunction, psi: GridFunction, hp: HurstParam) -> float:
    """c_diff * iint [phi(x+y)-phi(x)][psi(x+y)-psi(x)] |y|^{2H-2} dx dy.

    For cell-wise constant functions the x-integral A(y) is exactly linear between
    integer multiples of dx, so the weight is integrated in closed form per cell and
    the constant tail beyond the support analytically.
    """
    g = _same_grid(phi, psi)
    a, b = phi.values, psi.values
    n = a.size
    # R[s] = sum_j a[j+s] b[j] for s = -(n-1)..(n-1)
    R = np.correlate(a, b, mode="full")
    mid = n - 1
    s = np.arange(1, n + 1)
    R_pos = np.append(R[mid + 1:], 0.0)       # s = 1..n
    R_neg = np.append(R[:mid][::-1], 0.0)     # s = -1..-n
    A = g.dx * (2 * R[mid] - R_pos - R_neg)
    W, tail = _diff_shift_weights(g.dx, hp.H, n)
    assert A.size == s.size
    return float(hp.c_diff * 2 * (np.dot(W, A) + tail * A[-1]))


@lru_cache(maxsize=64)
def _gram_lags(grid: Grid, hp: HurstParam, eps: float, form: str, pad: int) -> np.ndarray:
    n = grid.nx + 1
    if form == "difference":
        if eps != 0:
            raise ValueError("difference form has no mollified version; use form='fourier'")
        W, tail = _diff_shift_weights(grid.dx, hp.H, n)
        lags = np.empty(n)
        # unit cells at lag m: A_s = 2 dx for m = 0, otherwise A_s = -dx at s = m only
        lags[0] = hp.c_diff * 4 * grid.dx * (W.sum() + tail)
        lags[1:] = -hp.c_diff * 2 * grid.dx * W[:n - 1]
        return lags
    if form == "fourier":
        P = 2 * math.pi / grid.dx
        N = _fft_size(n, pad, P, eps)
        dxi = P / N
        xi = np.arange(N) * dxi
        w = _folded_weight(xi, grid.dx, hp.H, eps)
        # <e_0, e_m> = dxi * sum_k w_k e^{i xi_k m dx} (real, even in m)
        lag_all = np.fft.ifft(w).real * N * dxi
        lags = lag_all[:n] - _cusp_correction(grid.dx ** 2, dxi, hp.H)
        return hp.c1 * lags
    raise ValueError(f"unknown form {form!r}")


def h_gram(grid: Grid, hp: HurstParam, eps: float = 0.0, form: str = "difference",
           pad: int = 4) -> np.ndarray:
    """Gram matrix M with <phi, psi>_{H_eps} = phi @ M @ psi for nodal (cell) arrays.

    Toeplitz; read-only and cached per (grid, hp, eps, form).
    """
    M = toeplitz(_gram_lags(grid, hp, float(eps), form, pad))
    M.setflags(write=False)
    return M


def fbm_cell_lags(n: int, dx: float, H: float) -> np.ndarray:
    """Closed-form covariance of unit-cell fBm increments at lags 0..n-1."""
    m = np.arange(n, dtype=float)
    h2 = 2 * H
    return 0.5 * dx ** h2 * (np.abs(m + 1) ** h2 + np.abs(m - 1) ** h2 - 2 * m ** h2)


def mollifier_f_eps(x, hp: HurstParam, eps: float):
    """f_eps(x) = (1/pi) int_0^inf cos(xi x) e^{-eps xi^2} xi^{1-2H} dxi."""
    if eps <= 0:
        raise ValueError("eps must be > 0")
    a = 1 - 2 * hp.H

    def one(xv):
        xv = abs(float(xv))
        f = lambda k: math.exp(-eps * k * k) * k ** a
        if xv == 0:
            v = integrate.quad(f, 0, np.inf, epsabs=0, epsrel=1e-12, limit=200)[0]
        else:
            # integrate period by period up to where the Gaussian has died out
            top = math.sqrt(60.0 / eps)
            n_per = max(1, int(math.ceil(top * xv / (2 * math.pi))))
            edges = np.linspace(0, top, n_per + 1)
            v = sum(integrate.quad(lambda k: f(k) * math.cos(k * xv), lo, hi,
                                   epsabs=1e-15, epsrel=1e-12, limit=200)[0]
                    for lo, hi in zip(edges[:-1], edges[1:]))
        return v / math.pi

    if np.ndim(x) == 0:
        return one(x)
    return np.array([one(v) for v in np.ravel(x)]).reshape(np.shape(x))


def mollifier_f_eps_at_zero(hp: HurstParam, eps: float) -> float:
    """Closed form f_eps(0) = Gamma(1-H) / (2 pi eps^{1-H})."""
    return math.gamma(1 - hp.H) / (2 * math.pi * eps ** (1 - hp.H))


# ---------------------------------------------------------------------------
# seminorms of nodal fields (piecewise linear, restricted to [-L, L])

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


@lru_cache(maxsize=64)
def _pl_weights(dx: float, H: float, S: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(ma, mb, mc) for cells [s dx, (s+1) dx], s = 0..S-1, with
    int r(h)^2 h^{2H-2} dh = r_s^2 ma + 2 r_s r_{s+1} mb + r_{s+1}^2 mc for r linear."""
    p = 2 * H - 2
    ma = np.zeros(S)
    mb = np.zeros(S)
    mc = np.zeros(S)
    mc[0] = dx ** (2 * H - 1) / (2 * H + 1)   # r_0 = 0 by construction
    if S > 1:
        s = np.arange(1, S, dtype=float)[:, None]
        theta = 0.5 * (_GL_X + 1)[None, :]
        h = (s + theta) * dx
        w = 0.5 * dx * _GL_W[None, :] * h ** p
        ma[1:] = (w * (1 - theta) ** 2).sum(1)
        mb[1:] = (w * theta * (1 - theta)).sum(1)
        mc[1:] = (w * theta ** 2).sum(1)
    return ma, mb, mc


def _pl_integral(r: np.ndarray, dx: float, H: float) -> np.ndarray:
    """int_0^{(K-1) dx} r(h)^2 h^{2H-2} dh for r given at h = 0, dx, ... along the last axis."""
    K = r.shape[-1]
    if K < 2:
        return np.zeros(r.shape[:-1])
    ma, mb, mc = _pl_weights(dx, H, K - 1)
    r0, r1 = r[..., :-1], r[..., 1:]
    return (r0 * r0 * ma + 2 * r0 * r1 * mb + r1 * r1 * mc).sum(-1)


def frac_seminorm_nodal(f: np.ndarray, grid: Grid, hp: HurstParam) -> np.ndarray:
    """N_{1/2-H} f at every node: (int |f(x_j+h)-f(x_j)|^2 |h|^{2H-2} dh)^{1/2}.

    Works on the last axis, so a stack of slices is handled in one call.
    """
    f = np.asarray(f, dtype=float)
    n = f.shape[-1]
    if n != grid.nx + 1:
        raise GridMismatch("array length does not match grid")
    out = np.zeros(f.shape)
    ma, mb, mc = _pl_weights(grid.dx, hp.H, n - 1)
    for j in range(n):
        tot = np.zeros(f.shape[:-1])
        right = f[..., j:] - f[..., j:j + 1]
        left = f[..., j::-1] - f[..., j:j + 1]
        for r in (right, left):
            k = r.shape[-1] - 1
            if k > 0:
                r0, r1 = r[..., :-1], r[..., 1:]
                tot = tot + (r0 * r0 * ma[:k] + 2 * r0 * r1 * mb[:k] + r1 * r1 * mc[:k]).sum(-1)
        out[..., j] = np.sqrt(tot)
    return out


def frac_seminorm_N(f: GridFunction, hp: HurstParam, x: float | None = None):
    """Seminorm at the node ``x``; with ``x=None`` the whole nodal profile."""
    vals = frac_seminorm_nodal(f.values, f.grid, hp)
    if x is None:
        return vals
    return float(vals[f.grid.node(x)])


def trapezoid_weights(n: int, dx: float) -> np.ndarray:
    w = np.full(n, dx)
    w[0] = w[-1] = dx / 2
    return w


def lp_norm_slices(u: np.ndarray, grid: Grid, p: float) -> np.ndarray:
    w = trapezoid_weights(grid.nx + 1, grid.dx)
    return (np.abs(u) ** p @ w) ** (1.0 / p)


def nstar_slices(u: np.ndarray, grid: Grid, hp: HurstParam, p: float) -> np.ndarray:
    """N*_{1/2-H,p} per time slice: (int ||u(.)-u(.+h)||_{L^p}^2 |h|^{2H-2} dh)^{1/2}."""
    u = np.atleast_2d(np.asarray(u, dtype=float))
    n = grid.nx + 1
    r = np.zeros((u.shape[0], n))
    for s in range(1, n):
        d = np.abs(u[:, s:] - u[:, :-s]) ** p
        k = n - s
        if k == 1:
            r[:, s] = (d[:, 0] * grid.dx / 2) ** (1.0 / p)
        else:
            r[:, s] = (d @ trapezoid_weights(k, grid.dx)) ** (1.0 / p)
    # the shift set is symmetric, so both signs of h contribute equally
    return np.sqrt(2 * _pl_integral(r, grid.dx, hp.H))


def zp_norm(u: Field, p: float, hp: HurstParam) -> float:
    """sup_t ||u(t)||_{L^p} + sup_t N*_{1/2-H,p} u(t) (trapezoid in x, exact weight in h)."""
    if p < 2:
        raise ValueError("p must be >= 2")
    v = u.values
    return float(lp_norm_slices(v, u.grid, p).max() + nstar_slices(v, u.grid, hp, p).max())


def s2_seminorm(w: np.ndarray, grid: Grid, hp: HurstParam) -> np.ndarray:
    """int int |w(x+h)-w(x)|^2 |h|^{2H-2} dh dx per time slice."""
    w = np.atleast_2d(w)
    N = frac_seminorm_nodal(w, grid, hp)
    return (N * N) @ trapezoid_weights(grid.nx + 1, grid.dx)


def dC_metric(u: Field, v: Field) -> float:
    """sum_n 2^-n max_{t, |x|<=n} (|u-v| ^ 1), truncated at n = ceil(L).

    Terms beyond ceil(L) reuse the full-domain maximum, so the result is an upper bound
    on the metric of any extension that agrees on the grid.
    """
    g = _same_grid(u, v)
    d = np.minimum(np.abs(u.values - v.values), 1.0)
    return dC_from_diff(d, g)


def dC_from_diff(d: np.ndarray, g: Grid) -> float:
    """d_C from a (possibly batched) array of |u - v| ^ 1 values of shape (..., nt+1, nx+1)."""
    x = np.abs(g.x)
    colmax = d.max(axis=-2)
    nmax = int(math.ceil(g.L - 1e-12))
    total = 0.0
    for n in range(1, nmax + 1):
        total = total + 0.5 ** n * colmax[..., x <= n + 1e-12].max(axis=-1)
    return total + 0.5 ** nmax * colmax.max(axis=-1)
