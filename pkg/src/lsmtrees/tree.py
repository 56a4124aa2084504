"""Regression trees with axis-aligned splits and constant leaves.

Nodes are grown breadth first. Node ``i`` in breadth-first order always uses
the ``i``-th pre-drawn uniform for its axis and midpoint decisions, so a tree
grown with a larger depth budget extends the shallower tree grown from the
same seed instead of re-rolling its splits.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numba
import numpy as np

_REL_TOL = 1e-12


class SplitStrategy(str, Enum):
    RANDOM = "random"  # uniform axis, MSE-optimal threshold
    BEST = "best"  # scan every axis, keep the lowest split MSE


@dataclass(frozen=True)
class TreeFitConfig:
    max_depth: int = 5
    min_samples_leaf: int = 1
    split_strategy: SplitStrategy = SplitStrategy.RANDOM
    midpoint_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "split_strategy", SplitStrategy(self.split_strategy))
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if not 0.0 <= self.midpoint_prob < 1.0:
            raise ValueError("midpoint_prob must lie in [0, 1)")


@numba.njit(cache=True, nogil=True)
def _scan_sorted(xs, ys, min_leaf):
    """Best cut position in sorted data.

    Returns ``(k, score)`` where the left side is ``xs[:k]`` and ``score`` is
    the between-group sum of squares to maximise; ``k == -1`` when no cut
    between distinct values leaves ``min_leaf`` samples on both sides.
    """
    n = xs.shape[0]
    total = 0.0
    for i in range(n):
        total += ys[i]
    best_k = -1
    best = -np.inf
    left = 0.0
    for i in range(n - min_leaf):
        left += ys[i]
        k = i + 1
        if k < min_leaf or xs[i] == xs[k]:
            continue
        right = total - left
        score = left * left / k + right * right / (n - k)
        if score > best:
            best = score
            best_k = k
    return best_k, best


@numba.njit(cache=True, nogil=True)
def _cut_threshold(lo, hi):
    t = 0.5 * (lo + hi)
    if t >= hi:
        t = lo
    return t


@numba.njit(cache=True, nogil=True)
def _grow(x, y, max_depth, min_leaf, best_direction, q, axis_u, coin_u):
    n, d = x.shape
    cap = 2 * (n // min_leaf) + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)
    count = np.zeros(cap, np.int64)
    depth = np.zeros(cap, np.int64)
    start = np.zeros(cap, np.int64)
    stop = np.zeros(cap, np.int64)
    idx = np.arange(n)
    stop[0] = n
    n_nodes = 1
    node = 0
    while node < n_nodes:
        s = start[node]
        e = stop[node]
        m = e - s
        seg = idx[s:e].copy()
        mean = 0.0
        y_lo = np.inf
        y_hi = -np.inf
        for i in range(m):
            yi = y[seg[i]]
            mean += yi
            y_lo = min(y_lo, yi)
            y_hi = max(y_hi, yi)
        mean /= m
        yc = np.empty(m)
        sse = 0.0
        for i in range(m):
            yc[i] = y[seg[i]] - mean
            sse += yc[i] * yc[i]
        value[node] = mean
        count[node] = m
        if depth[node] >= max_depth or m < 2 * min_leaf or y_lo == y_hi:
            node += 1
            continue

        if best_direction:
            first_axis = 0
            last_axis = d
        else:
            first_axis = min(int(axis_u[node] * d), d - 1)
            last_axis = first_axis + 1
        use_midpoint = coin_u[node] < q

        best_axis = -1
        best_k = -1
        best_score = -np.inf
        best_order = np.empty(0, np.int64)
        best_thr = 0.0
        for a in range(first_axis, last_axis):
            xa = np.empty(m)
            for i in range(m):
                xa[i] = x[seg[i], a]
            order = np.argsort(xa, kind="mergesort")
            xs = xa[order]
            ys = yc[order]
            if use_midpoint:
                thr = 0.5 * (xs[0] + xs[m - 1])
                k = 0
                while k < m and xs[k] <= thr:
                    k += 1
                if k < min_leaf or m - k < min_leaf:
                    continue
                sl = 0.0
                for i in range(k):
                    sl += ys[i]
                sr = -sl
                for i in range(k, m):
                    sr += ys[i]
                score = sl * sl / k + sr * sr / (m - k)
            else:
                k, score = _scan_sorted(xs, ys, min_leaf)
                if k < 0:
                    continue
                thr = _cut_threshold(xs[k - 1], xs[k])
            if score > best_score:
                best_score = score
                best_axis = a
                best_k = k
                best_order = order
                best_thr = thr

        # split SSE = sse - score; require a strict relative improvement
        if best_axis < 0 or best_score <= _REL_TOL * sse:
            node += 1
            continue

        for i in range(m):
            idx[s + i] = seg[best_order[i]]
        feature[node] = best_axis
        threshold[node] = best_thr
        start[n_nodes] = s
        stop[n_nodes] = s + best_k
        start[n_nodes + 1] = s + best_k
        stop[n_nodes + 1] = e
        depth[n_nodes] = depth[node] + 1
        depth[n_nodes + 1] = depth[node] + 1
        left[node] = n_nodes
        right[node] = n_nodes + 1
        n_nodes += 2
        node += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy(), count[:n_nodes].copy(),
            depth[:n_nodes].copy())


@numba.njit(cache=True, nogil=True)
def _apply(x, feature, threshold, left, right):
    n = x.shape[0]
    out = np.empty(n, np.int64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if x[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@dataclass(frozen=True, eq=False)
class RegressionTree:
    """Fitted tree stored as flat node arrays; ``feature == -1`` marks a leaf.

    Samples go to the left child when ``x[feature] <= threshold``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    count: np.ndarray
    node_depth: np.ndarray
    n_features: int
    config: TreeFitConfig = field(default_factory=TreeFitConfig)

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def depth(self) -> int:
        return int(self.node_depth.max())

    @property
    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.feature < 0)

    def _as_matrix(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, self.n_features)
        if x.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {x.shape[1]}")
        return np.ascontiguousarray(x)

    def apply(self, x) -> np.ndarray:
        """Index of the leaf reached by each row of ``x``."""
        return _apply(self._as_matrix(x), self.feature, self.threshold, self.left, self.right)

    def predict(self, x) -> np.ndarray:
        return self.value[self.apply(x)]

    def to_dict(self, node: int = 0) -> dict:
        """Nested dump for debugging: internal nodes carry axis/threshold, all nodes value/count."""
        out = {"value": float(self.value[node]), "count": int(self.count[node])}
        if self.feature[node] >= 0:
            out["axis"] = int(self.feature[node])
            out["threshold"] = float(self.threshold[node])
            out["left"] = self.to_dict(int(self.left[node]))
            out["right"] = self.to_dict(int(self.right[node]))
        return out


def fit_tree(x, y, config: TreeFitConfig, rng: np.random.Generator | None = None) -> RegressionTree:
    """Grow a regression tree on ``x`` (``(M, d)``) and responses ``y``.

    A node becomes a leaf when it reaches ``max_depth``, holds fewer than
    ``2 * min_samples_leaf`` samples, has constant responses, admits no cut
    that leaves ``min_samples_leaf`` samples per side, or when the best cut
    does not strictly reduce the node's squared error.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    x = np.ascontiguousarray(x)
    y = np.ascontiguousarray(y, dtype=float)
    if x.shape[0] != y.shape[0] or x.shape[0] < 1:
        raise ValueError("x and y must hold the same positive number of samples")
    if rng is None:
        rng = np.random.Generator(np.random.Philox(config.seed))
    cap = 2 * (x.shape[0] // config.min_samples_leaf) + 1
    axis_u = rng.random(cap)
    coin_u = rng.random(cap)
    arrays = _grow(x, y, int(config.max_depth), int(config.min_samples_leaf),
                   config.split_strategy is SplitStrategy.BEST, float(config.midpoint_prob),
                   axis_u, coin_u)
    return RegressionTree(*arrays, n_features=x.shape[1], config=config)


def best_split_1d(xs, ys, min_samples_leaf: int = 1):
    """MSE-optimal single cut of one-dimensional data.

    Returns ``(threshold, left_mean, right_mean, split_mse)`` or ``None`` when
    no admissible threshold exists. Ties go to the smallest threshold.
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValueError("xs and ys must be 1-D arrays of equal length")
    if xs.size < 2 * min_samples_leaf:
        return None
    order = np.argsort(xs, kind="mergesort")
    xs_sorted = xs[order]
    ys_sorted = ys[order] - ys.mean()
    k, _ = _scan_sorted(xs_sorted, ys_sorted, int(min_samples_leaf))
    if k < 0:
        return None
    thr = float(_cut_threshold(xs_sorted[k - 1], xs_sorted[k]))
    mask = xs <= thr
    left_mean = ys[mask].mean()
    right_mean = ys[~mask].mean()
    fitted = np.where(mask, left_mean, right_mean)
    return thr, float(left_mean), float(right_mean), float(np.mean((ys - fitted) ** 2))


def training_mse(tree: RegressionTree, x, y) -> float:
    y = np.asarray(y, dtype=float)
    return float(np.mean((y - tree.predict(x)) ** 2))
