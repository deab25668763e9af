"""Mild-solution solvers for the stochastic wave equation and its controlled version.

Discretisation (shared by every solver so that the zero-noise / zero-control cases
coincide bit for bit):

* sources live on the nx cells [x_k, x_{k+1}) and time slabs [t_m, t_{m+1});
* the cell source is b_m(k) = sigma(t_m, xc_k, ubar_m(k)) * (sqrt(eps) dW(m,k) + dt (M g_m)(k)),
  with xc_k the cell midpoint, ubar the mean of the two nodal values and M the cell Gram
  matrix of the H (or H_eps) inner product;
* u(t_n, x_j) = I0(t_n, x_j) + sum_{m<n} sum_k G(t_n - t_m, x_j - xc_k) b_m(k).

G is a half times the indicator of the light cone, so each inner sum is a window sum
read off a prefix sum.  The whole history is re-summed for every output time.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
import math
from typing import Callable

import numpy as np

from .fracspace import Field, Grid, HurstParam, h_gram


class NumericFailure(RuntimeError):
    def __init__(self, msg, index=None):
        super().__init__(msg)
        self.index = index


# ---------------------------------------------------------------------------
# coefficients and data

@dataclass(frozen=True)
class DiffusionCoefficient:
    eval: Callable
    du: Callable
    dxu: Callable
    lipschitz_const: float
    name: str = "custom"
    params: dict = field(default_factory=dict)

    def __call__(self, t, x, u):
        return self.eval(t, x, u)


def linear_sigma(c: float = 1.0) -> DiffusionCoefficient:
    c = float(c)
    return DiffusionCoefficient(lambda t, x, u: c * u,
                                lambda t, x, u: c + 0 * u,
                                lambda t, x, u: 0 * u,
                                abs(c), "linear", {"c": c})


def damped_sigma(c: float = 1.0) -> DiffusionCoefficient:
    """sigma(u) = c u / (1 + u^2); |sigma'| <= |c|."""
    c = float(c)
    return DiffusionCoefficient(lambda t, x, u: c * u / (1 + u * u),
                                lambda t, x, u: c * (1 - u * u) / (1 + u * u) ** 2,
                                lambda t, x, u: 0 * u,
                                abs(c), "damped", {"c": c})


def table_sigma(u_pts, s_pts) -> DiffusionCoefficient:
    """Piecewise-linear sigma(u) through (u_pts, s_pts); must pass through (0, 0)."""
    u_pts = np.asarray(u_pts, float)
    s_pts = np.asarray(s_pts, float)
    if abs(np.interp(0.0, u_pts, s_pts)) > 1e-12:
        raise ValueError("tabulated sigma must vanish at u = 0")
    slopes = np.diff(s_pts) / np.diff(u_pts)
    lip = float(np.abs(slopes).max())

    def du(t, x, u):
        k = np.clip(np.searchsorted(u_pts, u) - 1, 0, len(slopes) - 1)
        return slopes[k]

    # constant extrapolation outside the table
    return DiffusionCoefficient(lambda t, x, u: np.interp(u, u_pts, s_pts), du,
                                lambda t, x, u: 0 * u, lip, "table",
                                {"u": u_pts.tolist(), "s": s_pts.tolist()})


def check_hypothesis(sigma: DiffusionCoefficient, grid: Grid, u_range=(-5.0, 5.0), n_u: int = 41,
                     rng_seed: int = 0) -> dict:
    """Sampled check of sigma(t,x,0) = 0 and the derivative / Lipschitz bounds on a
    (t, x, u) lattice of 9 x 17 x n_u points plus 2000 random triples."""
    t = np.linspace(0, grid.T, 9)[:, None, None]
    x = np.linspace(-grid.L, grid.L, 17)[None, :, None]
    u = np.linspace(*u_range, n_u)[None, None, :]
    T, X, U = np.broadcast_arrays(t, x, u)
    zero = np.abs(sigma.eval(T[..., 0], X[..., 0], 0 * U[..., 0])).max()
    du = np.abs(sigma.du(T, X, U)).max()
    dxu = np.abs(sigma.dxu(T, X, U)).max()
    rng = np.random.default_rng(rng_seed)
    tt = rng.uniform(0, grid.T, 2000)
    xx = rng.uniform(-grid.L, grid.L, 2000)
    a, b = rng.uniform(*u_range, (2, 2000))
    q = np.abs(sigma.eval(tt, xx, a) - sigma.eval(tt, xx, b)) / np.maximum(np.abs(a - b), 1e-300)
    lip = float(q.max())
    C = sigma.lipschitz_const * (1 + 1e-12)
    return {"sigma_at_zero": float(zero), "max_du": float(du), "max_dxu": float(dxu),
            "max_lipschitz_quotient": lip,
            "ok": bool(zero <= 1e-14 and du <= C and dxu <= C and lip <= C)}


@dataclass(frozen=True)
class InitialData:
    u0: Callable
    v0: Callable
    holder_alpha: float = 1.0
    support_radius: float = 1.0
    name: str = "custom"
    params: dict = field(default_factory=dict)


def _bump(x, amp, radius):
    x = np.asarray(x, float)
    r = np.abs(x) / radius
    return np.where(r < 1, amp * np.cos(0.5 * np.pi * np.minimum(r, 1)) ** 2, 0.0)


def bump_data(amp: float = 1.0, radius: float = 1.0, v_amp: float = 0.0) -> InitialData:
    """u0 = amp cos^2(pi x / 2R) on |x| < R (Lipschitz, compact support), v0 = v_amp times the same shape."""
    return InitialData(lambda x: _bump(x, amp, radius), lambda x: _bump(x, v_amp, radius),
                       1.0, radius, "bump", {"amp": amp, "radius": radius, "v_amp": v_amp})


def zero_data() -> InitialData:
    z = lambda x: np.zeros_like(np.asarray(x, float))
    return InitialData(z, z, 1.0, 0.0, "zero", {})


def table_data(x_pts, u_pts, v_pts=None) -> InitialData:
    x_pts = np.asarray(x_pts, float)
    u_pts = np.asarray(u_pts, float)
    v_pts = np.zeros_like(u_pts) if v_pts is None else np.asarray(v_pts, float)
    nz = np.nonzero((u_pts != 0) | (v_pts != 0))[0]
    rad = float(np.abs(x_pts[nz]).max()) if nz.size else 0.0
    return InitialData(lambda x: np.interp(x, x_pts, u_pts, left=0.0, right=0.0),
                       lambda x: np.interp(x, x_pts, v_pts, left=0.0, right=0.0),
                       1.0, rad, "table", {})


def initial_term_I0(data: InitialData, grid: Grid, sub: int = 8) -> Field:
    """d'Alembert: (u0(x+t) + u0(x-t)) / 2 + (1/2) int_{x-t}^{x+t} v0.

    The v0 integral is a trapezoid rule on a grid ``sub`` times finer than the spatial
    grid, extended by the light cone on both sides.
    """
    x = grid.x
    t = grid.t[:, None]
    u = 0.5 * (data.u0(x[None, :] + t) + data.u0(x[None, :] - t))
    ext = grid.L + grid.T + grid.dx
    n = int(round(2 * ext / grid.dx)) * sub
    y = np.linspace(-ext, ext, n + 1)
    vy = data.v0(y)
    if np.any(vy):
        V = np.concatenate([[0.0], np.cumsum(0.5 * (vy[1:] + vy[:-1]) * np.diff(y))])
        u = u + 0.5 * (np.interp(x[None, :] + t, y, V) - np.interp(x[None, :] - t, y, V))
    return Field(u, grid)


# ---------------------------------------------------------------------------
# discrete light-cone windows

@lru_cache(maxsize=32)
def cone_offsets(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """For lag l = n - m, cells k with |x_j - xc_k| < l dt are k = j + lo[l] .. j + hi[l]."""
    lag = np.arange(grid.nt + 1)
    rho = lag * grid.dt / grid.dx
    tol = 1e-9
    lo = np.floor(-0.5 - rho + tol).astype(int) + 1
    hi = np.ceil(-0.5 + rho - tol).astype(int) - 1
    return lo, hi


@lru_cache(maxsize=32)
def _window_index(grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Prefix-sum indices (clipped to [0, nx]) per lag and node: shapes (nt+1, nx+1)."""
    lo, hi = cone_offsets(grid)
    j = np.arange(grid.nx + 1)
    ilo = np.clip(j[None, :] + lo[:, None], 0, grid.nx)
    ihi = np.clip(j[None, :] + hi[:, None] + 1, 0, grid.nx)
    ihi = np.maximum(ihi, ilo)
    ilo.setflags(write=False)
    ihi.setflags(write=False)
    return ilo, ihi


def _prefix(b: np.ndarray) -> np.ndarray:
    P = np.zeros(b.shape[:-1] + (b.shape[-1] + 1,))
    np.cumsum(b, axis=-1, out=P[..., 1:])
    return P


def duhamel_all(b: np.ndarray, grid: Grid) -> np.ndarray:
    """(sum_{m<n} sum_k G(t_n - t_m, x_j - xc_k) b_m(k))_{n,j} for sources b of shape (nt, nx)."""
    ilo, ihi = _window_index(grid)
    P = _prefix(b)                                   # (nt, nx+1)
    nt = grid.nt
    n = np.arange(nt + 1)[:, None]
    m = np.arange(nt)[None, :]
    lag = np.where(m < n, n - m, 0)                  # lag 0 has an empty window
    mm = np.broadcast_to(m, lag.shape)
    S = P[mm[..., None], ihi[lag]] - P[mm[..., None], ilo[lag]]
    return 0.5 * S.sum(axis=1)


def cell_values(u_row: np.ndarray) -> np.ndarray:
    return 0.5 * (u_row[..., :-1] + u_row[..., 1:])


def drift_density(g: np.ndarray | None, grid: Grid, hp: HurstParam, eps_mollify: float = 0.0):
    """dt <1_cell_k, g_m>_{H_eps} for the nx cells, shape (nt, nx), or None for no control.

    g_m is read as a nodal grid function (nx+1 cells, the last one [L, L+dx) lying
    outside the domain), matching the energy accessor of the control.
    """
    if g is None:
        return None
    g = np.asarray(g, float)
    if g.shape != (grid.nt, grid.nx + 1):
        raise ValueError(f"control shape {g.shape} does not match grid {(grid.nt, grid.nx + 1)}")
    if not np.any(g):
        return None
    M = h_gram(grid, hp, eps_mollify, form="difference" if eps_mollify == 0 else "fourier")
    return grid.dt * (g @ M[:, :grid.nx])


def march(I0: np.ndarray, sigma: DiffusionCoefficient, grid: Grid, forcing: np.ndarray | None,
          chunk: int = 512) -> np.ndarray:
    """Explicit time march for u = I0 + sum G sigma(u) forcing.

    ``forcing`` has shape (nt, nx) or (R, nt, nx); the result has shape (nt+1, nx+1) or
    (R, nt+1, nx+1).  With forcing None the result is I0 itself.
    """
    if forcing is None:
        return I0.copy()
    if forcing.ndim == 3 and forcing.shape[0] > chunk:
        return np.concatenate([march(I0, sigma, grid, forcing[i:i + chunk], chunk)
                               for i in range(0, forcing.shape[0], chunk)])
    batch = forcing.shape[:-2]
    nt, nx = grid.nt, grid.nx
    ilo, ihi = _window_index(grid)
    xc = grid.x_mid
    tg = grid.t
    u = np.empty(batch + (nt + 1, nx + 1))
    u[...] = I0
    P = np.zeros(batch + (nt, nx + 1))
    for n in range(1, nt + 1):
        m = n - 1
        b = sigma.eval(tg[m], xc, cell_values(u[..., m, :])) * forcing[..., m, :]
        np.cumsum(b, axis=-1, out=P[..., m, 1:])
        ms = np.arange(n)
        lag = n - ms
        S = (P[..., ms[:, None], ihi[lag]] - P[..., ms[:, None], ilo[lag]]).sum(axis=-2)
        u[..., n, :] = I0[n] + 0.5 * S
        if not np.all(np.isfinite(u[..., n, :])):
            bad = np.argwhere(~np.isfinite(u[..., n, :]))[0]
            raise NumericFailure(f"non-finite solution at time index {n}, entry {tuple(bad)}",
                                 (n,) + tuple(int(v) for v in bad))
    return u


@dataclass
class SolveResult:
    u: Field
    scheme_meta: dict
    seed: int | None = None
    replicate: int | None = None


def _meta(grid, hp, eps, controlled):
    return {"scheme": "explicit left-point Walsh sum, full re-summation per output time",
            "kernel_sampling": "cell midpoints", "sigma_argument": "cell mean of nodal values",
            "inner_product": "difference form (cell Gram matrix)" if controlled else None,
            "eps": eps, "H": hp.H, "grid": grid.to_dict()}


def _noise_array(dW, grid):
    arr = dW.dW if hasattr(dW, "dW") else np.asarray(dW, float)
    if arr.shape[-2:] != (grid.nt, grid.nx):
        raise ValueError(f"noise shape {arr.shape} does not match grid")
    return arr


def controlled_forcing(eps: float, dW, g, grid: Grid, hp: HurstParam):
    if eps < 0:
        raise ValueError("eps must be >= 0")
    parts = []
    if eps > 0 and dW is not None:
        parts.append(math.sqrt(eps) * _noise_array(dW, grid))
    d = drift_density(g, grid, hp)
    if d is not None:
        parts.append(d)
    if not parts:
        return None
    out = parts[0]
    for p_ in parts[1:]:
        out = out + p_
    return out


def solve_swe(data: InitialData, sigma: DiffusionCoefficient, eps: float, dW, grid: Grid,
              hp: HurstParam, I0: Field | None = None) -> SolveResult:
    I0 = I0 if I0 is not None else initial_term_I0(data, grid)
    u = march(I0.values, sigma, grid, controlled_forcing(eps, dW, None, grid, hp))
    return SolveResult(Field(u, grid), _meta(grid, hp, eps, False))


def solve_controlled(data: InitialData, sigma: DiffusionCoefficient, eps: float, dW, g,
                     grid: Grid, hp: HurstParam, I0: Field | None = None) -> SolveResult:
    I0 = I0 if I0 is not None else initial_term_I0(data, grid)
    gv = g.g if hasattr(g, "g") else g
    u = march(I0.values, sigma, grid, controlled_forcing(eps, dW, gv, grid, hp))
    return SolveResult(Field(u, grid), _meta(grid, hp, eps, True))


def solve_batch(data: InitialData, sigma: DiffusionCoefficient, eps: float, dW: np.ndarray,
                grid: Grid, hp: HurstParam, g=None, I0: Field | None = None) -> np.ndarray:
    """Many replicas at once: dW of shape (R, nt, nx) -> u of shape (R, nt+1, nx+1)."""
    I0 = I0 if I0 is not None else initial_term_I0(data, grid)
    gv = g.g if hasattr(g, "g") else g
    f = controlled_forcing(eps, dW, gv, grid, hp)
    if f is None:
        return np.broadcast_to(I0.values, (len(dW),) + I0.values.shape).copy()
    if f.ndim == 2:
        f = np.broadcast_to(f, (len(dW),) + f.shape)
    return march(I0.values, sigma, grid, f)


# ---------------------------------------------------------------------------
# regularity probe

def holder_probe(u: Field, gamma: float) -> dict:
    """Empirical Hoelder quotients of u in t and in x over dyadic separations."""
    if not (0 < gamma < 0.5):
        raise ValueError("gamma must lie in (0, 1/2)")
    v = u.values
    g = u.grid
    out = {}
    for axis, step, name in ((0, g.dt, "t"), (1, g.dx, "x")):
        n = v.shape[axis]
        seps, incs = [], []
        k = 1
        while k < n // 2:
            d = np.abs(np.take(v, range(k, n), axis) - np.take(v, range(0, n - k), axis)).max()
            seps.append(k * step)
            incs.append(d)
            k *= 2
        seps = np.array(seps)
        incs = np.array(incs)
        q = incs / seps ** gamma
        pos = incs > 0
        slope = float(np.polyfit(np.log(seps[pos]), np.log(incs[pos]), 1)[0]) if pos.sum() >= 2 else float("nan")
        out[name] = {"separations": seps.tolist(), "max_increment": incs.tolist(),
                     "max_quotient": float(q.max()) if q.size else 0.0, "fitted_exponent": slope}
    return out
