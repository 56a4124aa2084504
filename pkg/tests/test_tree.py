import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from lsmtrees.tree import TreeFitConfig, best_split_1d, fit_tree, training_mse


def brute_force_split(xs, ys, min_leaf):
    """Exhaustive scan over every midpoint between distinct sorted values."""
    values = np.unique(xs)
    best = None
    for lo, hi in zip(values[:-1], values[1:]):
        thr = 0.5 * (lo + hi)
        left = xs <= thr
        if left.sum() < min_leaf or (~left).sum() < min_leaf:
            continue
        fitted = np.where(left, ys[left].mean(), ys[~left].mean())
        mse = np.mean((ys - fitted) ** 2)
        if best is None or mse < best[1]:
            best = (thr, mse)
    return best


def leaf_boxes(tree):
    """Leaf id -> (lower, upper) bounds, derived from the root by interval intersection."""
    d = tree.n_features
    boxes = {}
    stack = [(0, np.full(d, -np.inf), np.full(d, np.inf))]
    while stack:
        node, lo, hi = stack.pop()
        a = tree.feature[node]
        if a < 0:
            boxes[node] = (lo, hi)
            continue
        t = tree.threshold[node]
        lhi = hi.copy()
        lhi[a] = min(hi[a], t)
        rlo = lo.copy()
        rlo[a] = max(lo[a], t)
        stack.append((tree.left[node], lo, lhi))
        stack.append((tree.right[node], rlo, hi))
    return boxes


def membership(tree, x):
    # lower bound is exclusive, upper inclusive
    out = np.full(x.shape[0], -1)
    for leaf, (lo, hi) in leaf_boxes(tree).items():
        inside = np.all((x > lo) & (x <= hi), axis=1)
        assert np.all(out[inside] == -1), "leaf regions overlap"
        out[inside] = leaf
    return out


def test_best_split_separable_step():
    assert best_split_1d([1, 2, 3, 4], [0, 0, 10, 10], 1) == (2.5, 0.0, 10.0, 0.0)


def test_best_split_constant_x():
    assert best_split_1d([3, 3, 3, 3], [1, 2, 3, 4], 1) is None


def test_best_split_three_points_against_enumeration():
    xs, ys = np.array([1.0, 2.0, 3.0]), np.array([1.0, 2.0, 4.0])
    thr, left, right, mse = best_split_1d(xs, ys, 1)
    ref_thr, ref_mse = brute_force_split(xs, ys, 1)
    assert thr == ref_thr == 2.5
    assert (left, right) == (1.5, 4.0)
    assert mse == pytest.approx(ref_mse, abs=1e-15)
    assert mse == pytest.approx(1 / 6)


def test_best_split_respects_min_leaf():
    xs = np.arange(10.0)
    ys = np.r_[10.0, np.zeros(9)]
    thr, *_ = best_split_1d(xs, ys, 3)
    assert thr == 2.5
    assert best_split_1d(xs[:5], ys[:5], 3) is None


def test_best_split_ties_pick_smallest_threshold():
    # y symmetric around the centre: cutting at 0.5 or 2.5 gives the same error
    thr, *_ = best_split_1d([0, 1, 2, 3], [1, 0, 0, 1], 1)
    assert thr == 0.5


def test_constant_response_gives_single_leaf():
    x = np.random.default_rng(0).random((200, 3))
    tree = fit_tree(x, np.full(200, 7.25), TreeFitConfig(max_depth=6))
    assert tree.n_nodes == 1
    np.testing.assert_array_equal(tree.predict(np.random.default_rng(1).random((5, 3))), 7.25)


def test_step_function_depth_one():
    rng = np.random.default_rng(3)
    x = rng.random(1000)
    y = (x > 0.5).astype(float)
    tree = fit_tree(x[:, None], y, TreeFitConfig(max_depth=1))
    below, above = x[x <= 0.5].max(), x[x > 0.5].min()
    assert below < tree.threshold[0] < above
    assert tree.value[tree.left[0]] == 0.0 and tree.value[tree.right[0]] == 1.0
    assert tree.predict([0.9])[0] == 1.0


def test_midpoint_rule():
    rng = np.random.default_rng(4)
    x = rng.random((300, 1))
    y = rng.normal(size=300) + x[:, 0]
    # midpoint_prob just below one: the root coin falls under it for this seed
    tree = fit_tree(x, y, TreeFitConfig(max_depth=1, midpoint_prob=0.999999, seed=1))
    assert tree.threshold[0] == pytest.approx(0.5 * (x.min() + x.max()), abs=1e-15)
    left = x[:, 0] <= tree.threshold[0]
    assert tree.value[tree.left[0]] == pytest.approx(y[left].mean(), rel=1e-12)
    assert tree.value[tree.right[0]] == pytest.approx(y[~left].mean(), rel=1e-12)


def test_best_direction_picks_informative_axis():
    rng = np.random.default_rng(5)
    x = rng.random((500, 4))
    y = (x[:, 2] > 0.3).astype(float)
    tree = fit_tree(x, y, TreeFitConfig(max_depth=1, split_strategy="best"))
    assert tree.feature[0] == 2


def test_single_leaf_predicts_everywhere():
    tree = fit_tree(np.zeros((3, 2)), np.full(3, 7.0), TreeFitConfig())
    assert tree.predict([1e9, -1e9])[0] == 7.0


def test_predict_dimension_mismatch():
    tree = fit_tree(np.random.default_rng(0).random((20, 2)), np.arange(20.0), TreeFitConfig())
    with pytest.raises(ValueError):
        tree.predict(np.zeros((4, 3)))


def test_leaf_regions_tile_and_match_routing():
    rng = np.random.default_rng(6)
    x = rng.normal(size=(2000, 3))
    y = np.sin(x[:, 0]) + x[:, 1] ** 2 + 0.1 * rng.normal(size=2000)
    tree = fit_tree(x, y, TreeFitConfig(max_depth=7, min_samples_leaf=10, seed=2))
    members = membership(tree, x)
    np.testing.assert_array_equal(members, tree.apply(x))
    for leaf in tree.leaves:
        mask = members == leaf
        assert mask.sum() == tree.count[leaf]
        assert tree.value[leaf] == pytest.approx(y[mask].mean(), rel=1e-10, abs=1e-12)


def test_training_mse_perfect_and_single_leaf():
    x = np.arange(8.0)[:, None]
    y = np.repeat([1.0, 5.0], 4)
    assert training_mse(fit_tree(x, y, TreeFitConfig(max_depth=3)), x, y) == 0.0
    y2 = np.random.default_rng(0).normal(size=8)
    assert training_mse(fit_tree(x, y2, TreeFitConfig(max_depth=0)), x, y2) == pytest.approx(np.var(y2))


def test_training_mse_equals_leaf_variance_decomposition():
    rng = np.random.default_rng(7)
    x = rng.random((1500, 2))
    y = x[:, 0] * 3 + rng.normal(size=1500)
    tree = fit_tree(x, y, TreeFitConfig(max_depth=6, min_samples_leaf=20, seed=5))
    members = membership(tree, x)
    decomposition = sum(np.var(y[members == leaf]) * np.mean(members == leaf) for leaf in tree.leaves)
    assert training_mse(tree, x, y) == pytest.approx(decomposition, abs=1e-12)


def test_mse_non_increasing_in_depth():
    rng = np.random.default_rng(8)
    x = rng.random((3000, 3))
    y = np.cos(4 * x[:, 0]) + x[:, 1] * x[:, 2] + 0.2 * rng.normal(size=3000)
    mses = [training_mse(fit_tree(x, y, TreeFitConfig(max_depth=p, min_samples_leaf=5, seed=9)), x, y)
            for p in range(0, 12)]
    assert all(b <= a for a, b in zip(mses, mses[1:]))
    assert mses[-1] < mses[0]


def test_deeper_tree_extends_shallower_tree():
    rng = np.random.default_rng(9)
    x = rng.random((800, 4))
    y = rng.normal(size=800)
    small = fit_tree(x, y, TreeFitConfig(max_depth=3, seed=4))
    big = fit_tree(x, y, TreeFitConfig(max_depth=6, seed=4))
    internal = small.feature >= 0
    np.testing.assert_array_equal(big.feature[:small.n_nodes][internal], small.feature[internal])
    np.testing.assert_array_equal(big.threshold[:small.n_nodes][internal], small.threshold[internal])


def test_determinism():
    rng = np.random.default_rng(10)
    x = rng.random((1000, 5))
    y = rng.normal(size=1000)
    cfg = TreeFitConfig(max_depth=8, min_samples_leaf=3, seed=77)
    a, b = fit_tree(x, y, cfg), fit_tree(x, y, cfg)
    for name in ("feature", "threshold", "left", "right", "value", "count"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))


def test_to_dict_dump():
    x = np.arange(4.0)[:, None]
    tree = fit_tree(x, np.array([0.0, 0.0, 10.0, 10.0]), TreeFitConfig(max_depth=2))
    dump = tree.to_dict()
    assert dump["axis"] == 0 and dump["threshold"] == 1.5 and dump["count"] == 4
    assert dump["left"] == {"value": 0.0, "count": 2}


def test_shrinking_leaf_width_with_depth():
    widths = {p: [] for p in (1, 2, 3, 4)}
    for seed in range(60):
        rng = np.random.default_rng(seed)
        x = rng.random((400, 1))
        y = rng.normal(size=400)
        for p in widths:
            tree = fit_tree(x, y, TreeFitConfig(max_depth=p, midpoint_prob=0.5, seed=seed))
            w = [min(hi[0], 1.0) - max(lo[0], 0.0) for lo, hi in leaf_boxes(tree).values()]
            widths[p].append(max(w))
    means = [np.mean(widths[p]) for p in sorted(widths)]
    assert all(b < a for a, b in zip(means, means[1:]))


samples = st.integers(2, 200).flatmap(
    lambda n: st.tuples(
        hnp.arrays(np.float64, n, elements=st.floats(-50, 50, allow_nan=False, width=32)),
        hnp.arrays(np.float64, n, elements=st.floats(-50, 50, allow_nan=False, width=32)),
    ))


@settings(max_examples=150, deadline=None)
@given(samples, st.integers(1, 5))
def test_depth_one_matches_brute_force(data, min_leaf):
    xs, ys = data
    ref = brute_force_split(xs, ys, min_leaf)
    got = best_split_1d(xs, ys, min_leaf)
    if ref is None or len(xs) < 2 * min_leaf:
        assert got is None
        return
    assert got is not None
    assert got[3] == pytest.approx(ref[1], abs=1e-12, rel=1e-12)
    tree = fit_tree(xs[:, None], ys, TreeFitConfig(max_depth=1, min_samples_leaf=min_leaf))
    if tree.n_nodes == 3:
        assert training_mse(tree, xs[:, None], ys) == pytest.approx(ref[1], abs=1e-12, rel=1e-12)
    else:
        # the tree refuses cuts that do not strictly improve the error
        assert ref[1] >= np.var(ys) * (1 - 1e-12)


@settings(max_examples=60, deadline=None)
@given(hnp.arrays(np.float64, st.tuples(st.integers(1, 300), st.integers(1, 4)),
                  elements=st.floats(-10, 10, allow_nan=False)),
       st.integers(1, 20), st.integers(0, 12), st.integers(0, 2 ** 31))
def test_leaf_invariants(x, min_leaf, depth, seed):
    y = np.sin(x).sum(axis=1) + np.random.default_rng(seed).normal(size=x.shape[0])
    tree = fit_tree(x, y, TreeFitConfig(max_depth=depth, min_samples_leaf=min_leaf, seed=seed))
    leaves = tree.apply(x)
    assert tree.depth <= depth
    for leaf in np.unique(leaves):
        mask = leaves == leaf
        if tree.n_nodes > 1:
            assert mask.sum() >= min_leaf
        assert tree.value[leaf] == pytest.approx(y[mask].mean(), rel=1e-10, abs=1e-10)
