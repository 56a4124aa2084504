"""Exercise payoffs and the discounted cash-flow matrix."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .models import PathSet


class PayoffKind(str, Enum):
    PUT_1D = "Put1D"
    MAX_CALL = "MaxCall"
    GEOMETRIC_BASKET_PUT = "GeometricBasketPut"
    ARITHMETIC_BASKET_PUT = "ArithmeticBasketPut"


@dataclass(frozen=True)
class Payoff:
    kind: PayoffKind
    strike: float
    weights: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", PayoffKind(self.kind))
        if self.strike <= 0:
            raise ValueError("strike must be positive")
        if self.kind is PayoffKind.ARITHMETIC_BASKET_PUT:
            if self.weights is None:
                raise ValueError("ArithmeticBasketPut needs weights")
            w = np.asarray(self.weights, dtype=float)
            if not np.isclose(w.sum(), 1.0):
                raise ValueError("basket weights must sum to 1")
            object.__setattr__(self, "weights", w)
        elif self.weights is not None:
            raise ValueError(f"{self.kind.value} takes no weights")

    def __call__(self, s) -> np.ndarray:
        return evaluate(self, s)


@dataclass
class CashflowMatrix:
    """Discounted exercise values ``z`` and the in-the-money mask, both ``(M, N + 1)``."""

    z: np.ndarray
    itm: np.ndarray


def evaluate(payoff: Payoff, s) -> np.ndarray | float:
    """Undiscounted payoff of the spot vector(s) ``s``; the last axis holds the assets."""
    s = np.asarray(s, dtype=float)
    scalar = s.ndim <= 1
    s = np.atleast_1d(s)
    d = s.shape[-1]
    K = payoff.strike
    kind = payoff.kind
    if kind is PayoffKind.PUT_1D:
        if d != 1:
            raise ValueError(f"Put1D expects 1 asset, got {d}")
        value = K - s[..., 0]
    elif kind is PayoffKind.MAX_CALL:
        value = s.max(axis=-1) - K
    elif kind is PayoffKind.GEOMETRIC_BASKET_PUT:
        value = K - np.exp(np.log(s).mean(axis=-1))
    else:
        if payoff.weights.size != d:
            raise ValueError(f"basket has {payoff.weights.size} weights but {d} assets")
        value = K - s @ payoff.weights
    value = np.maximum(value, 0.0)
    return float(value) if scalar else value


def cashflows(payoff: Payoff, paths: PathSet, r: float) -> CashflowMatrix:
    """Discount the exercise value at every date back to t_0."""
    raw = evaluate(payoff, paths.states)
    discount = np.exp(-r * paths.grid.times)
    return CashflowMatrix(z=raw * discount[None, :], itm=raw > 0.0)
