"""Skeleton equation u^g = I0 + int <G sigma(u^g), g>_{H_eps} ds by Picard iteration, and the
uniqueness / continuity diagnostics built on it."""
from __future__ import annotations

from dataclasses import dataclass, field
import math

import numpy as np

from .fracspace import (Field, Grid, HurstParam, dC_metric, h_gram, lp_norm_slices,
                        s2_seminorm, trapezoid_weights, zp_norm)
from .swe import (DiffusionCoefficient, InitialData, cell_values, drift_density, duhamel_all,
                  initial_term_I0, march)


@dataclass(frozen=True, eq=False)
class Control:
    """g[m, :] is the spatial grid function on time slab [t_m, t_{m+1})."""

    g: np.ndarray
    grid: Grid

    def __post_init__(self):
        g = np.asarray(self.g, float)
        if g.shape != (self.grid.nt, self.grid.nx + 1):
            raise ValueError(f"control must have shape {(self.grid.nt, self.grid.nx + 1)}")
        if not np.all(np.isfinite(g)):
            raise ValueError("non-finite control")
        object.__setattr__(self, "g", g)

    @classmethod
    def zero(cls, grid: Grid) -> "Control":
        return cls(np.zeros((grid.nt, grid.nx + 1)), grid)

    def energy(self, hp: HurstParam, eps: float = 0.0) -> float:
        """(1/2) sum_m dt ||g_m||^2_{H_eps}."""
        M = h_gram(self.grid, hp, eps, form="difference" if eps == 0 else "fourier")
        return float(0.5 * self.grid.dt * np.einsum("ij,jk,ik->", self.g, M, self.g))

    def in_SN(self, hp: HurstParam, N: float) -> bool:
        return 2 * self.energy(hp) <= N * (1 + 1e-12)

    def __add__(self, other: "Control") -> "Control":
        return Control(self.g + other.g, self.grid)

    def scaled(self, a: float) -> "Control":
        return Control(a * self.g, self.grid)


def bump_control(grid: Grid, hp: HurstParam, energy: float, radius: float = 1.0,
                 center: float = 0.0) -> Control:
    """Time-constant cos^2 bump in space, scaled to the requested energy."""
    r = np.abs(grid.x - center) / radius
    shape = np.where(r < 1, np.cos(0.5 * np.pi * np.minimum(r, 1)) ** 2, 0.0)
    g = Control(np.tile(shape, (grid.nt, 1)), grid)
    if energy == 0:
        return Control.zero(grid)
    return g.scaled(math.sqrt(energy / g.energy(hp)))


@dataclass
class PicardTrace:
    d_l2: list = field(default_factory=list)
    d_s2: list = field(default_factory=list)
    iterates: list = field(default_factory=list)

    @property
    def distances(self) -> np.ndarray:
        return np.asarray(self.d_l2) + np.asarray(self.d_s2)

    def __len__(self):
        return len(self.d_l2)


class PicardNonConvergence(RuntimeError):
    def __init__(self, msg, trace: PicardTrace):
        super().__init__(msg)
        self.trace = trace


def picard_distance(du: np.ndarray, grid: Grid, hp: HurstParam) -> tuple[float, float]:
    """sup_t ||du(t)||_{L^2} and sup_t sqrt(S2(du(t)))."""
    l2 = float(lp_norm_slices(du, grid, 2).max())
    s2 = float(np.sqrt(np.maximum(s2_seminorm(du, grid, hp), 0)).max())
    return l2, s2


def skeleton_rhs(u: np.ndarray, I0: np.ndarray, sigma: DiffusionCoefficient, drift: np.ndarray | None,
                 grid: Grid) -> np.ndarray:
    """I0 + int_0^t <G(t-s, x-.) sigma(u(s,.)), g(s,.)> ds, evaluated for all (t, x) at once."""
    if drift is None:
        return I0.copy()
    b = sigma.eval(grid.t[:-1, None], grid.x_mid[None, :], cell_values(u[:-1])) * drift
    return I0 + duhamel_all(b, grid)


def solve_skeleton(data: InitialData, sigma: DiffusionCoefficient, g: Control, hp: HurstParam,
                   grid: Grid, eps_mollify: float = 0.0, tol: float = 1e-8, max_iter: int = 60,
                   u_init: np.ndarray | None = None, keep_iterates: bool = False,
                   I0: Field | None = None) -> tuple[Field, PicardTrace]:
    """Picard iteration from u^0 = I0 (or ``u_init``) until
    sup_t ||u^{n+1} - u^n||_{L^2} + sup_t S2(u^{n+1} - u^n)^{1/2} < tol."""
    if tol <= 0 or max_iter < 1:
        raise ValueError("need tol > 0 and max_iter >= 1")
    if eps_mollify < 0:
        raise ValueError("eps_mollify must be >= 0")
    I0v = (I0 if I0 is not None else initial_term_I0(data, grid)).values
    drift = drift_density(g.g, grid, hp, eps_mollify)
    u = I0v.copy() if u_init is None else np.array(u_init, float)
    trace = PicardTrace()
    if keep_iterates:
        trace.iterates.append(u.copy())
    for _ in range(max_iter):
        new = skeleton_rhs(u, I0v, sigma, drift, grid)
        if not np.all(np.isfinite(new)):
            raise PicardNonConvergence("non-finite Picard iterate", trace)
        l2, s2 = picard_distance(new - u, grid, hp)
        trace.d_l2.append(l2)
        trace.d_s2.append(s2)
        u = new
        if keep_iterates:
            trace.iterates.append(u.copy())
        if l2 + s2 < tol:
            return Field(u, grid), trace
    raise PicardNonConvergence(f"no convergence to {tol} within {max_iter} iterations", trace)


def solve_skeleton_direct(data: InitialData, sigma: DiffusionCoefficient, g: Control,
                          hp: HurstParam, grid: Grid, eps_mollify: float = 0.0,
                          I0: Field | None = None) -> Field:
    """The discrete skeleton system is causal, so a single explicit march solves it exactly."""
    I0v = (I0 if I0 is not None else initial_term_I0(data, grid)).values
    return Field(march(I0v, sigma, grid, drift_density(g.g, grid, hp, eps_mollify)), grid)


def fixed_point_residual(u: Field, data, sigma, g: Control, hp, grid, eps_mollify=0.0) -> float:
    I0v = initial_term_I0(data, grid).values
    rhs = skeleton_rhs(u.values, I0v, sigma, drift_density(g.g, grid, hp, eps_mollify), grid)
    return float(np.abs(rhs - u.values).max())


def super_linear_decay(d: np.ndarray, tail: int = 5) -> bool:
    """log d_n eventually super-linear: the successive ratios d_{n+1}/d_n are non-increasing
    over the last ``tail`` steps (at least three ratios) and strictly smaller at the end."""
    d = np.asarray(d, float)
    d = d[d > 0]
    r = d[1:] / d[:-1]
    r = r[-tail:]
    if len(r) < 3:
        return False
    return bool(np.all(np.diff(r) <= 1e-12) and r[-1] < r[0])


def uniqueness_residual(u: Field, v: Field, hp: HurstParam, grid: Grid):
    """S1(t) = int |u - v|^2 dx and S2(t) = int int |D_h (u - v)|^2 |h|^{2H-2} dh dx."""
    if u.grid != grid or v.grid != grid:
        raise ValueError("fields are not on the given grid")
    w = u.values - v.values
    S1 = (w * w) @ trapezoid_weights(grid.nx + 1, grid.dx)
    S2 = s2_seminorm(w, grid, hp)
    return S1, S2


def gronwall_ratio(S1: np.ndarray, S2: np.ndarray, grid: Grid, hp: HurstParam) -> np.ndarray:
    """(S1 + S2)(t) divided by int_0^t ((t-s)^{2H} + (t-s)^{4H-1}) (S1 + S2)(s) ds (left-point)."""
    S = S1 + S2
    t = grid.t
    out = np.full(len(t), np.nan)
    for n in range(1, len(t)):
        lag = t[n] - t[:n]
        rhs = grid.dt * np.sum((lag ** (2 * hp.H) + lag ** (4 * hp.H - 1)) * S[:n])
        out[n] = S[n] / rhs if rhs > 0 else (0.0 if S[n] == 0 else np.inf)
    return out


def mollified_family_probe(data, sigma, g: Control, hp, grid, eps_list, p: float = 2.0,
                           tol: float = 1e-10, max_iter: int = 200) -> dict:
    eps_list = list(eps_list)
    sols = {e: solve_skeleton(data, sigma, g, hp, grid, e, tol, max_iter)[0] for e in eps_list}
    base = sols[0.0] if 0.0 in sols else solve_skeleton(data, sigma, g, hp, grid, 0.0, tol, max_iter)[0]
    rows = [{"eps": e, "dC_to_rough": dC_metric(sols[e], base), "zp_norm": zp_norm(sols[e], p, hp)}
            for e in eps_list]
    z = [r["zp_norm"] for r in rows]
    return {"rows": rows, "zp_spread": (max(z) - min(z)) / max(max(z), 1e-300)}


def oscillating_control(g: Control, psi: np.ndarray, mode: int) -> Control:
    """g + psi(x) sin(n pi t / T), sampled at slab midpoints."""
    grid = g.grid
    tm = grid.t[:-1] + 0.5 * grid.dt
    return Control(g.g + np.sin(mode * np.pi * tm / grid.T)[:, None] * psi[None, :], grid)


def weak_convergence_probe(g: Control, modes, data, sigma, hp, grid, psi: np.ndarray | None = None) -> dict:
    """d_C(u^{g_n}, u^g) for the weakly null perturbations g_n = g + psi sin(n pi t / T)."""
    if psi is None:
        psi = bump_control(grid, hp, 0.5, radius=1.0).g[0]
    I0 = initial_term_I0(data, grid)
    ref = solve_skeleton_direct(data, sigma, g, hp, grid, I0=I0)
    rows = []
    for n in modes:
        gn = oscillating_control(g, psi, n)
        un = solve_skeleton_direct(data, sigma, gn, hp, grid, I0=I0)
        rows.append({"mode": n, "dC": dC_metric(un, ref), "energy": gn.energy(hp)})
    return {"rows": rows}
