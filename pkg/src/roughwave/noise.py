"""Rectangle increments of the noise W: white in time, fractional (fBm-increment) in space."""
from __future__ import annotations

from dataclasses import dataclass, field
import json
import math

import numpy as np
from scipy.linalg import toeplitz

from .fracspace import Grid, HurstParam, fbm_cell_lags, h_gram

METHODS = ("exact_cholesky", "circulant_embedding")


@dataclass(frozen=True)
class NoiseSpec:
    hp: HurstParam
    grid: Grid
    seed: int = 0
    method: str = "exact_cholesky"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if not (0 <= int(self.seed) < 2 ** 64):
            raise ValueError("seed must be a 64-bit unsigned integer")

    def to_json(self) -> str:
        g = self.grid
        return json.dumps({"H": self.hp.H, "L": g.L, "nx": g.nx, "T": g.T, "nt": g.nt,
                           "seed": int(self.seed), "method": self.method}, sort_keys=True)

    @classmethod
    def from_json(cls, s: str) -> "NoiseSpec":
        d = json.loads(s)
        return cls(HurstParam(d["H"]), Grid(d["L"], d["nx"], d["T"], d["nt"]), int(d["seed"]),
                   d["method"])


@dataclass(frozen=True, eq=False)
class NoiseField:
    """dW[i, j] = W over [t_i, t_{i+1}] x [x_j, x_{j+1}]; shape (nt, nx), or (R, nt, nx) for a batch."""

    dW: np.ndarray
    grid: Grid


@dataclass(frozen=True, eq=False)
class SpatialCovariance:
    Q: np.ndarray
    lags: np.ndarray = field(repr=False)
    H: float = 0.0
    dx: float = 0.0


def build_spatial_covariance(grid: Grid, hp: HurstParam) -> SpatialCovariance:
    lags = fbm_cell_lags(grid.nx, grid.dx, hp.H)
    Q = toeplitz(lags)
    Q.setflags(write=False)
    return SpatialCovariance(Q, lags, hp.H, grid.dx)


def rng_for(seed: int, replicate: int = 0) -> np.random.Generator:
    """Independent stream per (seed, replicate); rows are then drawn in time order."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), int(replicate)])))


def _cholesky(Q: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(Q)
    except np.linalg.LinAlgError:
        jit = 1e-10 * np.trace(Q)
        return np.linalg.cholesky(Q + jit * np.eye(len(Q)))


def circulant_sqrt_spectrum(n: int, dx: float, H: float, max_factor: int = 8) -> np.ndarray:
    """sqrt of the circulant spectrum embedding n stationary cell increments.

    The embedding size starts at the next power of two >= 2(n-1) and doubles while the
    spectrum has negative entries, up to ``max_factor`` times.
    """
    m0 = 1 << int(math.ceil(math.log2(max(2 * (n - 1), 2))))
    m = m0
    while m <= max_factor * m0:
        r = fbm_cell_lags(m // 2 + 1, dx, H)
        lam = np.fft.fft(np.concatenate([r, r[-2:0:-1]])).real
        if lam.min() >= -1e-12 * lam.max():
            return np.sqrt(np.clip(lam, 0, None))
        m *= 2
    raise ValueError("circulant embedding has a negative spectrum after 8x padding; use exact_cholesky")


def sample_rows(cov: SpatialCovariance, n_rows: int, rng: np.random.Generator,
                method: str = "exact_cholesky") -> np.ndarray:
    """n_rows iid N(0, Q) vectors, shape (n_rows, nx)."""
    nx = len(cov.lags)
    if method == "exact_cholesky":
        Lc = _cholesky(cov.Q)
        return rng.standard_normal((n_rows, nx)) @ Lc.T
    sq = circulant_sqrt_spectrum(nx, cov.dx, cov.H)
    m = len(sq)
    z = rng.standard_normal((n_rows, m)) + 1j * rng.standard_normal((n_rows, m))
    y = np.fft.fft(sq * z, axis=1) / math.sqrt(m)
    # real and imaginary parts are independent draws; use the real part only
    return y.real[:, :nx].copy()


def sample_noise(spec: NoiseSpec, replicate: int = 0, cov: SpatialCovariance | None = None) -> NoiseField:
    g = spec.grid
    cov = cov if cov is not None else build_spatial_covariance(g, spec.hp)
    rows = sample_rows(cov, g.nt, rng_for(spec.seed, replicate), spec.method)
    return NoiseField(math.sqrt(g.dt) * rows, g)


def sample_noise_batch(spec: NoiseSpec, replicates, cov: SpatialCovariance | None = None) -> np.ndarray:
    """Stack of dW arrays (R, nt, nx); replicate r is identical to ``sample_noise(spec, r)``."""
    g = spec.grid
    cov = cov if cov is not None else build_spatial_covariance(g, spec.hp)
    reps = list(replicates)
    out = np.empty((len(reps), g.nt, g.nx))
    for k, r in enumerate(reps):
        out[k] = sample_rows(cov, g.nt, rng_for(spec.seed, r), spec.method)
    out *= math.sqrt(g.dt)
    return out


def _cells(f: np.ndarray, grid: Grid) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape == (grid.nt + 1, grid.nx + 1):
        return f[:-1, :-1]
    if f.shape == (grid.nt, grid.nx):
        return f
    raise ValueError(f"integrand shape {f.shape} does not match grid")


def walsh_integral(f: np.ndarray, dW: NoiseField | np.ndarray) -> np.ndarray | float:
    """Left-point sum sum_{i,j} f(t_i, x_j) dW(i, j); vectorised over a leading batch axis of dW."""
    arr = dW.dW if isinstance(dW, NoiseField) else np.asarray(dW)
    nt, nx = arr.shape[-2:]
    f = np.asarray(f, dtype=float)
    if f.shape == (nt + 1, nx + 1):
        f = f[:-1, :-1]
    if f.shape[-2:] != (nt, nx):
        raise ValueError(f"integrand shape {f.shape} does not match noise {arr.shape}")
    out = (f * arr).sum(axis=(-2, -1))
    return float(out) if np.ndim(out) == 0 else out


def isometry_norm(f: np.ndarray, grid: Grid, hp: HurstParam) -> float:
    """||f||^2 over L^2([0,T]; H) for a cell-wise constant integrand: dt sum_i f_i Q f_i."""
    fc = _cells(f, grid)
    Q = build_spatial_covariance(grid, hp).Q
    return float(grid.dt * np.einsum("ij,jk,ik->", fc, Q, fc))


@dataclass
class BDGReport:
    p: float
    lhs: float
    rhs: float
    ratio: float
    n_samples: int


def bdg_check(f: np.ndarray, grid: Grid, hp: HurstParam, p: float, n_samples: int,
              seed: int = 0) -> BDGReport:
    """Empirical ||int f dW||_{L^p} against sqrt(4p) (int int N_{1/2-H} f^2 dy ds)^{1/2}.

    The unknown constant in front of the right side is taken as 1, so only the ratio
    lhs / rhs is meaningful.  For deterministic f the L^p(Omega) norm of f is |f|.
    """
    if p < 2:
        raise ValueError("p must be >= 2")
    fc = _cells(f, grid)
    M = h_gram(grid, hp)[:grid.nx, :grid.nx]
    seminorm_sq = grid.dt * np.einsum("ij,jk,ik->", fc, M, fc) / hp.c_diff
    rhs = math.sqrt(4 * p) * math.sqrt(max(seminorm_sq, 0.0))
    if rhs == 0:
        return BDGReport(p, 0.0, 0.0, float("nan"), n_samples)
    cov = build_spatial_covariance(grid, hp)
    rng = rng_for(seed, 0)
    # the integral is Gaussian with variance ||f||^2; sample it directly row by row
    vals = np.zeros(n_samples)
    Lc = _cholesky(cov.Q)
    for i in range(fc.shape[0]):
        if not np.any(fc[i]):
            continue
        z = rng.standard_normal((n_samples, grid.nx)) @ Lc.T
        vals += math.sqrt(grid.dt) * z @ fc[i]
    lhs = float(np.mean(np.abs(vals) ** p) ** (1 / p))
    return BDGReport(p, lhs, rhs, lhs / rhs, n_samples)
