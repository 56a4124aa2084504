"""Path simulation for the multi-asset Black-Scholes and the Heston models.

Paths are produced in fixed-size blocks. Each block draws from its own Philox
stream keyed by ``(seed, block_index)``, so the output does not depend on how
many worker threads generate the blocks.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import ndtri

from ._seeding import generator

BLOCK_SIZE = 8192


class NotPositiveSemiDefinite(ValueError):
    """Raised when a correlation matrix has a negative Cholesky pivot."""


@dataclass(frozen=True)
class TimeGrid:
    """Exercise dates ``0 = t_0 < t_1 < ... < t_N = T``."""

    exercise_dates: tuple[float, ...]
    substeps_per_interval: int = 10

    def __post_init__(self):
        dates = tuple(float(t) for t in self.exercise_dates)
        object.__setattr__(self, "exercise_dates", dates)
        if len(dates) < 2:
            raise ValueError("a time grid needs at least t_0 and t_N (N >= 1)")
        if dates[0] != 0.0:
            raise ValueError("the first exercise date must be 0")
        if any(b <= a for a, b in zip(dates, dates[1:])):
            raise ValueError("exercise dates must be strictly increasing")
        if self.substeps_per_interval < 1:
            raise ValueError("substeps_per_interval must be >= 1")

    @classmethod
    def uniform(cls, maturity: float, n_dates: int, substeps_per_interval: int = 10) -> "TimeGrid":
        """Grid with ``n_dates`` equally spaced exercise dates after 0."""
        if n_dates < 1:
            raise ValueError("n_dates must be >= 1")
        dates = [maturity * j / n_dates for j in range(n_dates + 1)]
        return cls(tuple(dates), substeps_per_interval)

    @property
    def maturity(self) -> float:
        return self.exercise_dates[-1]

    @property
    def n_dates(self) -> int:
        """N, the number of exercise dates after t_0."""
        return len(self.exercise_dates) - 1

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self.exercise_dates)


@dataclass(frozen=True)
class BlackScholesParams:
    s0: np.ndarray
    r: float
    sigma: np.ndarray
    dividend: np.ndarray
    corr: np.ndarray

    def __post_init__(self):
        s0 = np.atleast_1d(np.asarray(self.s0, dtype=float))
        d = s0.size
        sigma = np.broadcast_to(np.asarray(self.sigma, dtype=float), (d,)).copy()
        dividend = np.broadcast_to(np.asarray(self.dividend, dtype=float), (d,)).copy()
        corr = np.asarray(self.corr, dtype=float)
        if corr.ndim == 0:
            corr = np.full((d, d), float(corr))
            np.fill_diagonal(corr, 1.0)
        if corr.shape != (d, d):
            raise ValueError(f"corr has shape {corr.shape}, expected {(d, d)}")
        if np.any(s0 <= 0):
            raise ValueError("initial spots must be positive")
        if np.any(sigma < 0):
            raise ValueError("volatilities must be non-negative")
        if not np.allclose(corr, corr.T, atol=1e-12) or not np.allclose(np.diag(corr), 1.0):
            raise ValueError("corr must be symmetric with a unit diagonal")
        correlation_factor(corr)
        for name, value in (("s0", s0), ("sigma", sigma), ("dividend", dividend), ("corr", corr)):
            object.__setattr__(self, name, value)

    @classmethod
    def uniform(cls, d: int, s0: float, r: float, sigma: float, dividend: float = 0.0,
                rho: float = 0.0) -> "BlackScholesParams":
        """Symmetric ``d``-asset market with a constant pairwise correlation."""
        return cls(np.full(d, s0), r, np.full(d, sigma), np.full(d, dividend), np.asarray(rho))

    @property
    def dim(self) -> int:
        return self.s0.size


@dataclass(frozen=True)
class HestonParams:
    s0: float
    v0: float
    kappa: float
    theta: float
    xi: float
    rho: float
    r: float

    def __post_init__(self):
        if self.s0 <= 0:
            raise ValueError("s0 must be positive")
        if min(self.v0, self.kappa, self.theta, self.xi) < 0:
            raise ValueError("v0, kappa, theta and xi must be non-negative")
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [-1, 1]")

    @property
    def dim(self) -> int:
        return 1


@dataclass
class PathSet:
    """Simulated spots, shape ``(M, N + 1, d)``, observed on the exercise grid.

    ``variance`` holds the Heston variance at the exercise dates (``None`` for
    Black-Scholes). Payoffs read ``states``; regressions read ``features``,
    which appends the variance so that the regressors see the whole Markov state.
    """

    states: np.ndarray
    grid: TimeGrid
    seed: int
    variance: np.ndarray | None = field(default=None, repr=False)

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[2]

    @property
    def features(self) -> np.ndarray:
        if self.variance is None:
            return self.states
        return np.concatenate([self.states, self.variance[:, :, None]], axis=2)


def correlation_factor(corr) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == corr``.

    Unlike :func:`numpy.linalg.cholesky` this accepts singular (PSD) matrices:
    pivots in ``[-1e-12, 0]`` are clamped to zero and the column is zeroed.
    """
    a = np.asarray(corr, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("corr must be a square matrix")
    n = a.shape[0]
    L = np.zeros_like(a)
    for j in range(n):
        pivot = a[j, j] - L[j, :j] @ L[j, :j]
        if pivot < -1e-12:
            raise NotPositiveSemiDefinite(f"negative pivot {pivot:.3e} at index {j}")
        if pivot <= 1e-12:
            L[j, j] = 0.0
            continue
        L[j, j] = np.sqrt(pivot)
        L[j + 1:, j] = (a[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    return L


def _normals(rng: np.random.Generator, shape) -> np.ndarray:
    # inverse-CDF normals; random() can return exactly 0
    u = rng.random(shape)
    np.maximum(u, 2.0 ** -60, out=u)
    return ndtri(u)


def _run_blocks(n_paths: int, worker, workers: int) -> list[np.ndarray]:
    starts = list(range(0, n_paths, BLOCK_SIZE))
    jobs = [(b, min(BLOCK_SIZE, n_paths - s)) for b, s in enumerate(starts)]
    if workers <= 1 or len(jobs) == 1:
        return [worker(b, n) for b, n in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: worker(*job), jobs))


def simulate_black_scholes(params: BlackScholesParams, grid: TimeGrid, n_paths: int, seed: int,
                           workers: int = 1) -> PathSet:
    """Exact log-normal transitions between consecutive exercise dates."""
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    d = params.dim
    L = correlation_factor(params.corr)
    dt = np.diff(grid.times)
    drift = (params.r - params.dividend - 0.5 * params.sigma ** 2)[None, :] * dt[:, None]
    vol = params.sigma[None, :] * np.sqrt(dt)[:, None]
    log_s0 = np.log(params.s0)

    def block(b: int, n: int) -> np.ndarray:
        z = _normals(generator(seed, b), (n, grid.n_dates, d)) @ L.T
        log_s = np.empty((n, grid.n_dates + 1, d))
        log_s[:, 0, :] = log_s0
        np.cumsum(drift + vol * z, axis=1, out=log_s[:, 1:, :])
        log_s[:, 1:, :] += log_s0
        out = np.exp(log_s)
        out[:, 0, :] = params.s0
        return out

    states = np.concatenate(_run_blocks(n_paths, block, workers), axis=0)
    return PathSet(states, grid, seed)


def simulate_heston(params: HestonParams, grid: TimeGrid, n_paths: int, seed: int,
                    workers: int = 1) -> PathSet:
    """Full-truncation Euler scheme on ``(log S, v)``.

    The variance may go negative between steps; only ``max(v, 0)`` enters the
    drift and diffusion terms, and the spot stays positive through the log.
    """
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    n_sub = grid.substeps_per_interval
    dts = np.diff(grid.times) / n_sub
    rho_bar = np.sqrt(1.0 - params.rho ** 2)
    p = params

    def block(b: int, n: int) -> np.ndarray:
        rng = generator(seed, b)
        log_s = np.full(n, np.log(p.s0))
        v = np.full(n, float(p.v0))
        s_out = np.empty((n, grid.n_dates + 1))
        v_out = np.empty((n, grid.n_dates + 1))
        s_out[:, 0] = p.s0
        v_out[:, 0] = p.v0
        for j, dt in enumerate(dts, start=1):
            z = _normals(rng, (n_sub, 2, n))
            sqdt = np.sqrt(dt)
            for k in range(n_sub):
                v_pos = np.maximum(v, 0.0)
                sv = np.sqrt(v_pos) * sqdt
                z1, z2 = z[k]
                log_s += (p.r - 0.5 * v_pos) * dt + sv * (p.rho * z1 + rho_bar * z2)
                v += p.kappa * (p.theta - v_pos) * dt + p.xi * sv * z1
            s_out[:, j] = np.exp(log_s)
            v_out[:, j] = v
        return np.stack([s_out, v_out])

    blocks = _run_blocks(n_paths, block, workers)
    spot = np.concatenate([blk[0] for blk in blocks], axis=0)
    var = np.concatenate([blk[1] for blk in blocks], axis=0)
    return PathSet(spot[:, :, None], grid, seed, variance=var)


def simulate(model: BlackScholesParams | HestonParams, grid: TimeGrid, n_paths: int, seed: int,
             workers: int = 1) -> PathSet:
    """Dispatch on the parameter type."""
    if isinstance(model, HestonParams):
        return simulate_heston(model, grid, n_paths, seed, workers)
    return simulate_black_scholes(model, grid, n_paths, seed, workers)


def short_rate(model: BlackScholesParams | HestonParams) -> float:
    return float(model.r)


__all__: Sequence[str] = [
    "BLOCK_SIZE", "BlackScholesParams", "HestonParams", "NotPositiveSemiDefinite", "PathSet",
    "TimeGrid", "correlation_factor", "simulate", "simulate_black_scholes", "simulate_heston",
    "short_rate",
]
