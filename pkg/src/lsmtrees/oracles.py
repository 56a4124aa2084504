"""Independent reference prices: Black-Scholes closed forms and a CRR lattice."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .models import BlackScholesParams, TimeGrid


class InvalidLatticeMapping(ValueError):
    pass


@dataclass(frozen=True)
class LatticeConfig:
    steps: int = 20_000


def bs_european_put(s0: float, K: float, r: float, sigma: float, delta: float, T: float) -> float:
    """European put on an asset paying a continuous yield ``delta``."""
    if T <= 0:
        return max(K - s0, 0.0)
    forward = s0 * math.exp((r - delta) * T)
    disc = math.exp(-r * T)
    if sigma <= 0:
        return disc * max(K - forward, 0.0)
    sd = sigma * math.sqrt(T)
    d1 = (math.log(forward / K) + 0.5 * sd * sd) / sd
    d2 = d1 - sd
    return float(disc * (K * ndtr(-d2) - forward * ndtr(-d1)))


def bs_european_call(s0: float, K: float, r: float, sigma: float, delta: float, T: float) -> float:
    # put-call parity
    put = bs_european_put(s0, K, r, sigma, delta, T)
    return put + s0 * math.exp(-delta * T) - K * math.exp(-r * T)


def exercise_levels(grid: TimeGrid, steps: int) -> np.ndarray:
    """Lattice level of every exercise date, snapped to the nearest level."""
    levels = np.rint(grid.times / grid.maturity * steps).astype(np.int64)
    if steps < grid.n_dates or np.any(np.diff(levels) <= 0):
        raise InvalidLatticeMapping(f"{steps} steps cannot separate {grid.n_dates} exercise dates")
    return levels


def crr_bermudan_1d(s0: float, K: float, r: float, sigma: float, delta: float, grid: TimeGrid,
                    kind: str = "put", config: LatticeConfig = LatticeConfig()) -> float:
    """Bermudan option on one asset by backward induction on a CRR tree.

    Exercise is allowed only at levels mapped from ``grid`` (``t_0`` included).
    """
    if kind not in ("put", "call"):
        raise ValueError(f"kind must be 'put' or 'call', got {kind!r}")
    steps = config.steps
    levels = exercise_levels(grid, steps)
    exercisable = np.zeros(steps + 1, dtype=bool)
    exercisable[levels] = True
    sign = -1.0 if kind == "put" else 1.0
    dt = grid.maturity / steps
    disc = math.exp(-r * dt)

    def exercise(n: int) -> np.ndarray:
        spots = s0 * np.exp(sigma * math.sqrt(dt) * (n - 2.0 * np.arange(n + 1)))
        return np.maximum(sign * (spots - K), 0.0)

    if sigma == 0.0:
        # degenerate tree: follow the deterministic forward
        best = 0.0
        for t in grid.times:
            best = max(best, math.exp(-r * t) * max(sign * (s0 * math.exp((r - delta) * t) - K), 0.0))
        return best

    u = math.exp(sigma * math.sqrt(dt))
    p = (math.exp((r - delta) * dt) - 1.0 / u) / (u - 1.0 / u)
    if not 0.0 <= p <= 1.0:
        raise InvalidLatticeMapping(f"risk-neutral probability {p:.4f} outside [0, 1]; use more steps")
    pu, pd = disc * p, disc * (1.0 - p)
    value = exercise(steps)
    for n in range(steps - 1, -1, -1):
        value = pu * value[:-1] + pd * value[1:]
        if exercisable[n]:
            np.maximum(value, exercise(n), out=value)
    return float(value[0])


def geometric_basket_proxy(params: BlackScholesParams) -> tuple[float, float, float]:
    """``(s0, sigma, delta)`` of the single asset that tracks the geometric mean.

    The geometric mean of correlated log-normal assets is itself log-normal,
    so geometric basket options reduce to one-asset problems.
    """
    d = params.dim
    cov = params.corr * np.outer(params.sigma, params.sigma)
    var = float(cov.sum()) / d ** 2
    s0 = float(np.exp(np.log(params.s0).mean()))
    delta = float(params.dividend.mean() + 0.5 * (params.sigma ** 2).mean() - 0.5 * var)
    return s0, math.sqrt(var), delta
