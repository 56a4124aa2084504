"""Random forests over :mod:`lsmtrees.tree` and the polynomial least-squares baseline."""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from ._seeding import derive_seed, generator
from .tree import RegressionTree, TreeFitConfig, fit_tree


class InsufficientSamples(ValueError):
    pass


@dataclass(frozen=True)
class ForestFitConfig:
    num_trees: int = 10
    tree_config: TreeFitConfig = field(default_factory=TreeFitConfig)
    bootstrap: bool = True
    max_samples: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.num_trees < 1:
            raise ValueError("num_trees must be >= 1")
        if not 0.0 < self.max_samples <= 1.0:
            raise ValueError("max_samples must lie in (0, 1]")


@dataclass(frozen=True, eq=False)
class RandomForest:
    trees: tuple[RegressionTree, ...]
    config: ForestFitConfig

    def predict(self, x) -> np.ndarray:
        preds = np.stack([tree.predict(x) for tree in self.trees])
        # np.sum reduces pairwise along a contiguous axis
        return np.ascontiguousarray(preds.T).sum(axis=1) / len(self.trees)


def member_seed(forest_seed: int, k: int) -> int:
    """Seed of the tree grown for member ``k`` of a forest."""
    return derive_seed(forest_seed, k, 0)


def _member_rows(forest_seed: int, k: int, n: int, config: ForestFitConfig) -> np.ndarray | None:
    size = math.ceil(config.max_samples * n)
    if not config.bootstrap and size == n:
        return None
    rng = generator(forest_seed, k, 1)
    if config.bootstrap:
        return rng.integers(0, n, size)
    return np.sort(rng.choice(n, size, replace=False))


def fit_forest(x, y, config: ForestFitConfig, workers: int = 1) -> RandomForest:
    """Fit ``num_trees`` trees, each on its own row sample of ``(x, y)``.

    Member ``k`` draws its rows and its split randomness from streams keyed by
    ``(config.seed, k)``; the result does not depend on ``workers``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(y, dtype=float)
    n = x.shape[0]
    if n < 1:
        raise InsufficientSamples("cannot fit a forest on zero samples")

    def member(k: int) -> RegressionTree:
        rows = _member_rows(config.seed, k, n, config)
        cfg = replace(config.tree_config, seed=member_seed(config.seed, k))
        if rows is None:
            return fit_tree(x, y, cfg)
        return fit_tree(x[rows], y[rows], cfg)

    if workers <= 1:
        trees = [member(k) for k in range(config.num_trees)]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trees = list(pool.map(member, range(config.num_trees)))
    return RandomForest(tuple(trees), config)


def predict_forest(forest: RandomForest, x) -> np.ndarray:
    return forest.predict(x)


def monomial_exponents(d: int, degree: int) -> np.ndarray:
    """Exponent rows of all monomials of total degree ``<= degree``.

    Graded lexicographic order: by total degree, then lexicographically with
    ``x_1`` ranked highest. For ``d = 2, degree = 2`` this is
    ``1, x1, x2, x1^2, x1 x2, x2^2``.
    """
    rows = []
    for k in range(degree + 1):
        for combo in itertools.combinations_with_replacement(range(d), k):
            e = np.zeros(d, dtype=np.int64)
            for i in combo:
                e[i] += 1
            rows.append(e)
    return np.array(rows, dtype=np.int64).reshape(-1, d)


def _design(z: np.ndarray, exponents: np.ndarray) -> np.ndarray:
    n, d = z.shape
    cols = np.empty((n, exponents.shape[0]))
    position = {tuple(e): j for j, e in enumerate(exponents)}
    for j, e in enumerate(exponents):
        nz = np.flatnonzero(e)
        if nz.size == 0:
            cols[:, j] = 1.0
            continue
        # every monomial extends a lower-degree one by a single factor
        i = int(nz[-1])
        parent = e.copy()
        parent[i] -= 1
        np.multiply(cols[:, position[tuple(parent)]], z[:, i], out=cols[:, j])
    return cols


@dataclass(frozen=True, eq=False)
class PolynomialModel:
    """Total-degree polynomial fitted on standardized inputs.

    Predictions use the standardized representation; ``coefficients`` gives
    the equivalent coefficients on raw monomials, in ``exponents`` order.
    """

    degree: int
    dim: int
    shift: np.ndarray
    scale: np.ndarray
    std_coefficients: np.ndarray

    @cached_property
    def exponents(self) -> np.ndarray:
        return monomial_exponents(self.dim, self.degree)

    def design_matrix(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, self.dim)
        if x.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim} features, got {x.shape[1]}")
        return _design((x - self.shift) / self.scale, self.exponents)

    def predict(self, x) -> np.ndarray:
        return self.design_matrix(x) @ self.std_coefficients

    @cached_property
    def coefficients(self) -> np.ndarray:
        index = {tuple(e): j for j, e in enumerate(self.exponents)}
        out = np.zeros(len(index))
        for e, c in zip(self.exponents, self.std_coefficients):
            # expand prod_i ((x_i - shift_i) / scale_i)^e_i into raw monomials
            terms = {(0,) * self.dim: c}
            for i in np.flatnonzero(e):
                k = int(e[i])
                expanded: dict[tuple[int, ...], float] = {}
                for key, val in terms.items():
                    for m in range(k + 1):
                        coef = math.comb(k, m) * (-self.shift[i]) ** (k - m) / self.scale[i] ** k
                        new = list(key)
                        new[i] += m
                        new = tuple(new)
                        expanded[new] = expanded.get(new, 0.0) + val * coef
                terms = expanded
            for key, val in terms.items():
                out[index[key]] += val
        return out


def n_monomials(d: int, degree: int) -> int:
    return math.comb(d + degree, degree)


def fit_polynomial(x, y, degree: int) -> PolynomialModel:
    """Least squares on the total-degree monomial basis.

    Columns are built from standardized inputs; the SVD-based solver returns
    the minimum-norm solution when the design is rank deficient.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(y, dtype=float)
    n, d = x.shape
    need = n_monomials(d, degree)
    if n < need:
        raise InsufficientSamples(f"{need} monomials need at least {need} samples, got {n}")
    shift = x.mean(axis=0)
    scale = x.std(axis=0)
    scale[scale == 0] = 1.0
    exponents = monomial_exponents(d, degree)
    A = _design((x - shift) / scale, exponents)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    model = PolynomialModel(degree, d, shift, scale, coef)
    model.__dict__["exponents"] = exponents
    return model


def predict_polynomial(model: PolynomialModel, x) -> np.ndarray:
    return model.predict(x)


@dataclass(frozen=True)
class TreeSpec:
    config: TreeFitConfig = field(default_factory=TreeFitConfig)

    def describe(self) -> str:
        c = self.config
        return f"tree(depth={c.max_depth},leaf={c.min_samples_leaf},split={c.split_strategy.value},q={c.midpoint_prob:g})"


@dataclass(frozen=True)
class ForestSpec:
    config: ForestFitConfig = field(default_factory=ForestFitConfig)

    def describe(self) -> str:
        c = self.config
        t = c.tree_config
        return (f"forest(trees={c.num_trees},max_samples={c.max_samples:g},bootstrap={c.bootstrap},"
                f"depth={t.max_depth},leaf={t.min_samples_leaf},split={t.split_strategy.value})")


@dataclass(frozen=True)
class PolynomialSpec:
    degree: int = 3

    def describe(self) -> str:
        return f"polynomial(degree={self.degree})"


RegressorSpec = TreeSpec | ForestSpec | PolynomialSpec


def min_samples(spec: RegressorSpec, d: int) -> int:
    """Smallest training set the regressor accepts."""
    if isinstance(spec, PolynomialSpec):
        return n_monomials(d, spec.degree)
    return 1


def fit_regressor(spec: RegressorSpec, x, y, seed: int, workers: int = 1):
    """Fit the regressor described by ``spec``; ``seed`` overrides the spec's own seed."""
    if isinstance(spec, PolynomialSpec):
        return fit_polynomial(x, y, spec.degree)
    if isinstance(spec, TreeSpec):
        return fit_tree(x, y, replace(spec.config, seed=seed))
    if isinstance(spec, ForestSpec):
        return fit_forest(x, y, replace(spec.config, seed=seed), workers=workers)
    raise TypeError(f"unknown regressor spec {spec!r}")
