"""Backward fitting of the exercise policy and forward pricing on fresh paths."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ._seeding import derive_seed
from .ensemble import RegressorSpec, fit_regressor, min_samples
from .models import BlackScholesParams, HestonParams, PathSet, TimeGrid, simulate
from .payoffs import CashflowMatrix, Payoff, cashflows


class GridMismatch(ValueError):
    pass


@dataclass
class DateDiagnostics:
    date_index: int
    n_train: int
    itm_count: int
    train_mse: float | None
    never_exercise: bool = False
    used_all_rows: bool = False


@dataclass
class PolicyModel:
    """Continuation-value regressors for exercise dates ``t_1 .. t_{N-1}``.

    ``regressors[j - 1]`` belongs to date ``t_j``; ``None`` means the date had
    no training data and the policy never exercises there.
    """

    regressors: list
    spec: RegressorSpec
    itm_filter: bool
    grid: TimeGrid
    dim: int
    diagnostics: list[DateDiagnostics] = field(default_factory=list)

    @classmethod
    def never_exercise(cls, grid: TimeGrid, dim: int, spec: RegressorSpec) -> "PolicyModel":
        """A policy that always holds to maturity."""
        return cls([None] * (grid.n_dates - 1), spec, True, grid, dim)

    def exercise_mask(self, j: int, states: np.ndarray, z: np.ndarray, itm: np.ndarray) -> np.ndarray:
        """Exercise decisions at ``t_j`` for one slice of paths.

        Only in-the-money paths may exercise, and they do so when the
        discounted exercise value is at least the predicted continuation.
        """
        model = self.regressors[j - 1]
        out = np.zeros(z.shape[0], dtype=bool)
        if model is None:
            return out
        rows = np.flatnonzero(itm)
        if rows.size:
            out[rows] = z[rows] >= model.predict(states[rows])
        return out


@dataclass
class PricingResult:
    price: float
    std_error: float
    ci95: tuple[float, float]
    immediate_z0: float
    mean_stopped_payoff: float
    resim_paths: int
    fit_paths: int
    z0_dominates: bool = False
    diagnostics: dict = field(default_factory=dict)


def fit_policy(paths: PathSet, flows: CashflowMatrix, spec: RegressorSpec, itm_filter: bool = True,
               seed: int = 0, workers: int = 1) -> PolicyModel:
    """Fit one continuation regressor per date, going backwards from ``t_{N-1}``.

    Targets are the realized discounted payoffs of the policy already fitted
    on later dates, so each path carries the value it would collect.
    """
    grid = paths.grid
    N = grid.n_dates
    features = paths.features
    M, _, d = features.shape
    if flows.z.shape != (M, N + 1):
        raise GridMismatch(f"cash flows have shape {flows.z.shape}, expected {(M, N + 1)}")
    realized = flows.z[:, N].copy()
    regressors: list = [None] * (N - 1)
    diagnostics: list[DateDiagnostics] = []
    need = min_samples(spec, d)
    for j in range(N - 1, 0, -1):
        itm = flows.itm[:, j]
        itm_count = int(itm.sum())
        x = features[:, j, :]
        if itm_filter:
            if itm_count == 0:
                diagnostics.append(DateDiagnostics(j, 0, 0, None, never_exercise=True))
                continue
            all_rows = itm_count < need
            rows = np.arange(M) if all_rows else np.flatnonzero(itm)
        else:
            all_rows = True
            rows = np.arange(M)
        model = fit_regressor(spec, x[rows], realized[rows], derive_seed(seed, j), workers)
        regressors[j - 1] = model
        fitted = model.predict(x[rows])
        diagnostics.append(DateDiagnostics(j, rows.size, itm_count,
                                           float(np.mean((realized[rows] - fitted) ** 2)),
                                           used_all_rows=all_rows and itm_filter))
        ex_rows = np.flatnonzero(itm)
        if ex_rows.size:
            cont = fitted if rows.size == ex_rows.size else model.predict(x[ex_rows])
            ex = ex_rows[flows.z[ex_rows, j] >= cont]
            realized[ex] = flows.z[ex, j]
    diagnostics.reverse()
    return PolicyModel(regressors, spec, itm_filter, grid, d, diagnostics)


def stopped_payoffs(policy: PolicyModel, paths: PathSet, flows: CashflowMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Discounted payoff collected on each path and the date index it stopped at."""
    N = paths.grid.n_dates
    if N != policy.grid.n_dates or not np.allclose(paths.grid.times, policy.grid.times):
        raise GridMismatch("paths and policy use different exercise grids")
    features = paths.features
    if features.shape[2] != policy.dim:
        raise GridMismatch(f"policy expects {policy.dim} state variables, paths have {features.shape[2]}")
    M = paths.n_paths
    payoff = flows.z[:, N].copy()
    stop = np.full(M, N)
    alive = np.ones(M, dtype=bool)
    for j in range(1, N):
        rows = np.flatnonzero(alive & flows.itm[:, j])
        if rows.size == 0:
            continue
        ex = policy.exercise_mask(j, features[rows, j, :], flows.z[rows, j], flows.itm[rows, j])
        hit = rows[ex]
        payoff[hit] = flows.z[hit, j]
        stop[hit] = j
        alive[hit] = False
    return payoff, stop


def price(policy: PolicyModel, paths: PathSet, flows: CashflowMatrix) -> PricingResult:
    """Resimulated time-0 price ``max(Z_0, mean stopped payoff)``."""
    payoff, stop = stopped_payoffs(policy, paths, flows)
    M = payoff.size
    mean = float(payoff.sum() / M)
    se = float(payoff.std(ddof=1) / np.sqrt(M)) if M > 1 else 0.0
    z0 = float(flows.z[0, 0])
    dominates = z0 > mean
    reported = 0.0 if dominates else se
    result = PricingResult(
        price=max(z0, mean),
        std_error=reported,
        ci95=(mean - 1.96 * reported, mean + 1.96 * reported),
        immediate_z0=z0,
        mean_stopped_payoff=mean,
        resim_paths=M,
        fit_paths=0,
        z0_dominates=dominates,
    )
    result.diagnostics["sample_std_error"] = se
    result.diagnostics["exercise_counts"] = np.bincount(stop, minlength=paths.grid.n_dates + 1).tolist()
    return result


def fit_and_price(model: BlackScholesParams | HestonParams, payoff: Payoff, grid: TimeGrid,
                  spec: RegressorSpec, m_fit: int = 100_000, m_resim: int = 100_000, seed: int = 0,
                  itm_filter: bool = True, workers: int = 1) -> PricingResult:
    """Simulate, fit the policy, then price it on an independent path set."""
    fit_seed = derive_seed(seed, 0)
    resim_seed = derive_seed(seed, 1)
    policy_seed = derive_seed(seed, 2)
    t0 = time.perf_counter()
    policy = _fit_phase(model, payoff, grid, spec, m_fit, fit_seed, policy_seed, itm_filter, workers)
    t1 = time.perf_counter()
    fresh = simulate(model, grid, m_resim, resim_seed, workers)
    result = price(policy, fresh, cashflows(payoff, fresh, model.r))
    t2 = time.perf_counter()
    result.fit_paths = m_fit
    result.diagnostics.update(seed=seed, fit_seed=fit_seed, resim_seed=resim_seed,
                              policy_seed=policy_seed, fit_seconds=t1 - t0, price_seconds=t2 - t1,
                              regressor=spec.describe(), dates=[vars(dg) for dg in policy.diagnostics])
    return result


def _fit_phase(model, payoff, grid, spec, m_fit, fit_seed, policy_seed, itm_filter, workers) -> PolicyModel:
    # kept separate so the training paths are released before resimulation
    paths = simulate(model, grid, m_fit, fit_seed, workers)
    return fit_policy(paths, cashflows(payoff, paths, model.r), spec, itm_filter, policy_seed, workers)
