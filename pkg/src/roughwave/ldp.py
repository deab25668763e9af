"""Rate function by control-energy minimisation, Monte-Carlo tail estimates along an
eps ladder, and the controlled-vs-skeleton discrepancy probe."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
import math
import multiprocessing as mp
import os

import numpy as np

from .fracspace import Grid, HurstParam, dC_from_diff, h_gram
from .noise import NoiseSpec, build_spatial_covariance, sample_noise_batch
from .skeleton import Control, solve_skeleton_direct
from .swe import (DiffusionCoefficient, InitialData, drift_density, initial_term_I0, march,
                  solve_batch)

EVENT_KINDS = ("terminal_point_level", "sup_level")


@dataclass(frozen=True)
class EventSpec:
    """u(T, x_star) >= level, or max over ``nodes`` of u(T, .) >= level."""

    kind: str
    x_star: float
    level: float
    nodes: tuple = ()

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"kind must be one of {EVENT_KINDS}")
        if not math.isfinite(self.level):
            raise ValueError("level must be finite")

    def margin(self, u: np.ndarray, grid: Grid) -> np.ndarray:
        """Event functional minus level; the event holds where this is >= 0.  Works on
        (nt+1, nx+1) fields and on stacks of them."""
        if self.kind == "terminal_point_level":
            return u[..., -1, grid.node(self.x_star)] - self.level
        idx = [grid.node(x) for x in (self.nodes or (self.x_star,))]
        return u[..., -1, idx].max(axis=-1) - self.level

    def to_dict(self) -> dict:
        return {"kind": self.kind, "x_star": self.x_star, "level": self.level,
                "nodes": list(self.nodes)}


# ---------------------------------------------------------------------------
# rate function

@dataclass
class OptConfig:
    nc_t: int = 8
    nc_x: int = 8
    mu0: float = 10.0
    stages: int = 8
    iters_per_stage: int = 25
    fd_step: float = 1e-6
    constraint_tol: float = 1e-3
    armijo_c: float = 1e-4
    max_backtrack: int = 30

    def __post_init__(self):
        if self.nc_t * self.nc_x > 144 or self.nc_t < 1 or self.nc_x < 1:
            raise ValueError("ansatz limited to 12 x 12 coefficients")


@dataclass
class RateResult:
    g_star: Control
    energy: float
    constraint_residual: float
    feasible: bool
    trace: list = field(default_factory=list)
    coeffs: np.ndarray | None = None


def control_basis(grid: Grid, event: EventSpec, nc_t: int, nc_x: int) -> np.ndarray:
    """Prolongation B of shape (nc_t * nc_x, nt, nx+1): piecewise constant on nc_t equal
    time blocks times hat functions on nc_x equispaced centres covering the backward
    light cone |x - x_star| <= T (plus one cell)."""
    half = grid.T + grid.dx
    if nc_x == 1:
        centres = np.array([event.x_star])
        width = half
    else:
        centres = np.linspace(event.x_star - half, event.x_star + half, nc_x + 2)[1:-1]
        width = centres[1] - centres[0]
    hats = np.maximum(0.0, 1 - np.abs(grid.x[None, :] - centres[:, None]) / width)
    blocks = np.minimum((np.arange(grid.nt) * nc_t) // grid.nt, nc_t - 1)
    B = np.zeros((nc_t, nc_x, grid.nt, grid.nx + 1))
    for a in range(nc_t):
        B[a][:, blocks == a, :] = hats[:, None, :]
    return B.reshape(nc_t * nc_x, grid.nt, grid.nx + 1)


def energy_matrix(B: np.ndarray, grid: Grid, hp: HurstParam) -> np.ndarray:
    """A with energy(sum c_i B_i) = c A c / 2."""
    M = h_gram(grid, hp)
    flat = B.reshape(len(B), grid.nt, grid.nx + 1)
    BM = np.einsum("amx,xy->amy", flat, M)
    return grid.dt * np.einsum("amy,bmy->ab", BM, flat)


def rate_minimize(event: EventSpec, data: InitialData, sigma: DiffusionCoefficient,
                  hp: HurstParam, grid: Grid, opt_cfg: OptConfig | None = None) -> RateResult:
    """Upper bound on inf { energy(g) : u^g meets the event } over a coarse control ansatz.

    Exterior penalty J_k(c) = c A c / 2 + mu_k max(0, -margin(c))^2 with mu_k = mu0 4^k.
    Each stage runs gradient descent in the metric A (direction -A^{-1} grad J) with
    Armijo backtracking; the margin gradient is by forward differences.  A final
    rescaling of the best iterate restores feasibility.
    """
    cfg = opt_cfg or OptConfig()
    I0 = initial_term_I0(data, grid)
    zero = Control.zero(grid)
    m0 = float(event.margin(I0.values, grid))
    if m0 >= 0:
        return RateResult(zero, 0.0, 0.0, True, [{"note": "zero control meets the event"}],
                          np.zeros(cfg.nc_t * cfg.nc_x))
    B = control_basis(grid, event, cfg.nc_t, cfg.nc_x)
    A = energy_matrix(B, grid, hp)
    A_inv = np.linalg.inv(A)
    n = len(A)

    def to_g(c):
        return Control(np.tensordot(c, B, axes=1), grid)

    # the forcing is linear in the coefficients, so finite-difference probes batch into one march
    D = np.stack([drift_density(b, grid, hp) for b in B])

    def margins(C):
        C = np.atleast_2d(C)
        u = march(I0.values, sigma, grid, np.tensordot(C, D, axes=1))
        return event.margin(u, grid)

    def margin(c):
        return float(margins(c)[0])

    def margin_grad(c, m):
        h = cfg.fd_step * np.maximum(1.0, np.abs(c))
        return (margins(c[None, :] + np.diag(h)) - m) / h

    # start along the steepest-ascent direction of the margin at g = 0, sized by linearisation
    gr0 = margin_grad(np.zeros(n), m0)
    d0 = A_inv @ gr0
    slope = gr0 @ d0
    if not slope > 0:
        return RateResult(zero, math.inf, -m0, False, [{"note": "event insensitive to the control"}])
    c = (-m0 / slope) * d0
    trace = []
    best = None
    step0 = 1.0
    for k in range(cfg.stages):
        mu = cfg.mu0 * 4.0 ** k

        def J(c_, m_):
            return 0.5 * c_ @ A @ c_ + mu * max(0.0, -m_) ** 2

        m = margin(c)
        for it in range(cfg.iters_per_stage):
            Jc = J(c, m)
            grad = A @ c
            if m < 0:
                grad = grad - 2 * mu * (-m) * margin_grad(c, m)
            d = -A_inv @ grad
            dec = grad @ d
            if dec > -1e-16:
                break
            step = min(1.0, 2 * step0)
            for _ in range(cfg.max_backtrack):
                cn = c + step * d
                mn = margin(cn)
                if J(cn, mn) <= Jc + cfg.armijo_c * step * dec:
                    break
                step *= 0.5
            else:
                break
            c, m, step0 = cn, mn, step
            if abs(Jc - J(c, m)) < 1e-12 * max(1.0, Jc):
                break
        e = 0.5 * c @ A @ c
        trace.append({"stage": k, "mu": mu, "energy": e, "margin": m})
        if m > -cfg.constraint_tol:
            best = c.copy()
            if m > -1e-2 * cfg.constraint_tol:
                break
    if best is None:
        best = c.copy()
    # feasibility restoration: smallest s >= 1 with margin(s c) >= 0
    s_lo, s_hi = 1.0, 1.0
    m = margin(best)
    if m < 0:
        while m < 0 and s_hi < 4:
            s_lo, s_hi = s_hi, s_hi * 1.05
            m = margin(s_hi * best)
        if m < 0:
            g = to_g(best)
            return RateResult(g, math.inf, -margin(best), False, trace, best)
        for _ in range(40):
            mid = 0.5 * (s_lo + s_hi)
            if margin(mid * best) >= 0:
                s_hi = mid
            else:
                s_lo = mid
        best = s_hi * best
    m = margin(best)
    g = to_g(best)
    energy = float(0.5 * best @ A @ best)
    trace.append({"stage": "restore", "scale": s_hi, "energy": energy, "margin": m})
    return RateResult(g, energy, max(0.0, -m), m >= 0, trace, best)


# ---------------------------------------------------------------------------
# Monte Carlo along an eps ladder

@dataclass
class TailEstimate:
    eps: list
    n_samples: list
    hits: list
    p_hat: list
    se: list
    r_hat: list
    zero_hit: list

    def rows(self) -> list[dict]:
        return [{"eps": e, "n": n, "hits": h, "p_hat": p, "se": s, "r_hat": r, "zero_hit": z}
                for e, n, h, p, s, r, z in zip(self.eps, self.n_samples, self.hits, self.p_hat,
                                               self.se, self.r_hat, self.zero_hit)]


def _margin_chunk(args):
    (event, data, sigma, hp, grid, eps, seed, lo, hi, method, g) = args
    spec = NoiseSpec(hp, grid, seed, method)
    cov = build_spatial_covariance(grid, hp)
    dW = sample_noise_batch(spec, range(lo, hi), cov)
    u = solve_batch(data, sigma, eps, dW, grid, hp, g)
    return event.margin(u, grid)


def _chunks(n, size):
    return [(i, min(n, i + size)) for i in range(0, n, size)]


_TASKS: list = []


def _run_task(i):
    fn, args = _TASKS[i]
    return fn(args)


def _pool_map(fn, tasks, jobs):
    """Map over chunk tasks; workers are forked so closures in data/sigma need no pickling."""
    global _TASKS
    jobs = jobs or os.cpu_count() or 1
    if jobs <= 1 or len(tasks) <= 1 or "fork" not in mp.get_all_start_methods():
        return [fn(t) for t in tasks]
    _TASKS = [(fn, t) for t in tasks]
    try:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks)),
                                 mp_context=mp.get_context("fork")) as ex:
            return list(ex.map(_run_task, range(len(tasks))))
    finally:
        _TASKS = []


def tail_margins(event, data, sigma, hp, grid, eps, n_samples, seed, jobs=1, chunk=1000,
                 method="exact_cholesky", g=None) -> np.ndarray:
    """Event margins for replicas 0..n-1 (replica r always sees the same noise)."""
    tasks = [(event, data, sigma, hp, grid, eps, seed, lo, hi, method, g)
             for lo, hi in _chunks(n_samples, chunk)]
    return np.concatenate(_pool_map(_margin_chunk, tasks, jobs))


def mc_tail(event: EventSpec, data: InitialData, sigma: DiffusionCoefficient, hp: HurstParam,
            grid: Grid, eps_ladder, n_samples: int, seed: int, jobs: int = 1) -> TailEstimate:
    """p_hat(eps) = P(event) with binomial SE and r_hat = -eps log((hits + 1/2) / (n + 1)).

    Common random numbers: every eps (and every level) uses the same replicas.
    """
    eps_ladder = [float(e) for e in eps_ladder]
    if n_samples < 1000:
        raise ValueError("n_samples must be >= 1000")
    if any(b >= a for a, b in zip(eps_ladder, eps_ladder[1:])):
        raise ValueError("eps ladder must be decreasing")
    out = TailEstimate([], [], [], [], [], [], [])
    for eps in eps_ladder:
        m = tail_margins(event, data, sigma, hp, grid, eps, n_samples, seed, jobs)
        hits = int(np.count_nonzero(m >= 0))
        p = hits / n_samples
        out.eps.append(eps)
        out.n_samples.append(n_samples)
        out.hits.append(hits)
        out.p_hat.append(p)
        out.se.append(math.sqrt(p * (1 - p) / n_samples))
        out.r_hat.append(-eps * math.log((hits + 0.5) / (n_samples + 1)))
        out.zero_hit.append(hits == 0)
    return out


def _dC_chunk(args):
    (data, sigma, hp, grid, eps, seed, lo, hi, g, ref) = args
    spec = NoiseSpec(hp, grid, seed)
    dW = sample_noise_batch(spec, range(lo, hi), build_spatial_covariance(grid, hp))
    u = solve_batch(data, sigma, eps, dW, grid, hp, g)
    return dC_from_diff(np.minimum(np.abs(u - ref), 1.0), grid)


def condition_b_probe(g_family, eps_ladder, data: InitialData, sigma: DiffusionCoefficient,
                      hp: HurstParam, grid: Grid, n_samples: int, seed: int = 0, N: float = 1.0,
                      deltas=(0.1, 0.05, 0.01), jobs: int = 1) -> dict:
    """P(d_C(controlled solution, skeleton) > delta) for each eps, with g^eps from ``g_family``
    (a list aligned with the ladder, or one Control used for every eps)."""
    eps_ladder = [float(e) for e in eps_ladder]
    fam = list(g_family) if isinstance(g_family, (list, tuple)) else [g_family] * len(eps_ladder)
    if len(fam) != len(eps_ladder):
        raise ValueError("one control per eps required")
    for gc in fam:
        if gc.energy(hp) > N / 2 * (1 + 1e-12):
            raise ValueError(f"control energy {gc.energy(hp)} exceeds N/2 = {N / 2}")
    I0 = initial_term_I0(data, grid)
    rows = []
    for eps, gc in zip(eps_ladder, fam):
        ref = solve_skeleton_direct(data, sigma, gc, hp, grid, I0=I0).values
        if eps == 0:
            d = np.zeros(n_samples)
        else:
            tasks = [(data, sigma, hp, grid, eps, seed, lo, hi, gc.g, ref)
                     for lo, hi in _chunks(n_samples, 500)]
            d = np.concatenate(_pool_map(_dC_chunk, tasks, jobs))
        rows.append({"eps": eps, "n": n_samples, "mean_dC": float(d.mean()),
                     "prob": {float(dl): float(np.mean(d > dl)) for dl in deltas}})
    return {"rows": rows}
