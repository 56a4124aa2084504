"""Desk-scale reproduction runs, one test per acceptance criterion.

Every Monte Carlo run uses root seed 2024 and 100,000 fitting paths. Each test
prints a single PASS/FAIL line; the lines are repeated in the terminal summary.
"""
import subprocess
import sys
import time
from pathlib import Path

import pytest

from lsmtrees.engine import fit_and_price
from lsmtrees.ensemble import ForestFitConfig, ForestSpec, PolynomialSpec, TreeSpec
from lsmtrees.experiments import builtin_config
from lsmtrees.oracles import LatticeConfig, crr_bermudan_1d
from lsmtrees.tree import TreeFitConfig

pytestmark = pytest.mark.acceptance

SEED = 2024
M = 100_000


def forest(trees, max_samples, depth, leaf):
    return ForestSpec(ForestFitConfig(trees, TreeFitConfig(depth, leaf), max_samples=max_samples))


def tree(depth, leaf):
    return TreeSpec(TreeFitConfig(depth, leaf))


def scenario(name, index=0):
    return builtin_config(name).scenarios[index]


def run(name, spec, index=0, m_resim=M):
    sc = scenario(name, index)
    start = time.perf_counter()
    res = fit_and_price(sc.model, sc.payoff, sc.grid, spec, M, m_resim, seed=SEED)
    return res, time.perf_counter() - start


def within(x, lo, hi):
    return lo <= x <= hi


@pytest.fixture(scope="module")
def put1d_runs():
    start = time.perf_counter()
    runs = {
        "forest": run("put1d", forest(10, 1.0, 5, 100))[0],
        "deep tree": run("put1d", tree(20, 1))[0],
        "polynomial": run("put1d", PolynomialSpec(3))[0],
        "tree": run("put1d", tree(5, 100))[0],
    }
    return runs, time.perf_counter() - start


def test_put1d_forest_and_overfitting_tree(put1d_runs, verdict):
    runs, elapsed = put1d_runs
    f, deep = runs["forest"].price, runs["deep tree"].price
    ok = within(f, 11.85, 12.05) and deep < 11.0 and elapsed <= 120
    assert verdict("1 put1d", ok, f"forest {f:.4f} in [11.85, 12.05]; depth-20 tree {deep:.4f} < 11.0; "
                                  f"{elapsed:.0f}s <= 120s")


def test_lattice_reference_and_upper_bound(put1d_runs, verdict):
    sc = scenario("put1d")
    crr = crr_bermudan_1d(100.0, sc.payoff.strike, sc.model.r, float(sc.model.sigma[0]), 0.0, sc.grid,
                          config=LatticeConfig(20_000))
    excess = {k: (r.price - crr) / r.diagnostics["sample_std_error"] for k, r in put1d_runs[0].items()}
    ok = abs(crr - 11.987) <= 0.01 and all(e <= 4 for e in excess.values())
    worst = max(excess, key=excess.get)
    assert verdict("2 lattice", ok, f"CRR {crr:.5f} vs 11.987 +- 0.01; largest excess {excess[worst]:+.2f} se "
                                    f"({worst}) <= 4")


def test_maxcall2(verdict):
    targets = [(13.90, 0.15), (8.08, 0.15), (21.34, 0.20)]
    parts, ok = [], True
    for i, (ref, tol) in enumerate(targets):
        start = time.perf_counter()
        poly = run("maxcall2", PolynomialSpec(5), i, m_resim=400_000)[0].price
        rf = run("maxcall2", forest(50, 0.1, 10, 50), i, m_resim=400_000)[0].price
        elapsed = time.perf_counter() - start
        ok &= abs(poly - ref) <= tol and abs(rf - ref) <= tol and elapsed <= 300
        parts.append(f"{ref}: poly {poly:.3f} forest {rf:.3f} ({elapsed:.0f}s)")
    assert verdict("3 maxcall2", ok, "; ".join(parts))


def test_geometric_basket(verdict):
    p2 = run("geoput2", PolynomialSpec(3))[0].price
    p10 = run("geoput10", PolynomialSpec(3))[0].price
    rf40, t40 = run("geoput40", forest(10, 0.5, 8, 100))
    ok = abs(p2 - 4.57) <= 0.10 and abs(p10 - 2.92) <= 0.08 and within(rf40.price, 2.40, 2.60) and t40 <= 600
    assert verdict("4 geoput", ok, f"d=2 {p2:.4f} (4.57 +- 0.10); d=10 {p10:.4f} (2.92 +- 0.08); "
                                   f"d=40 forest {rf40.price:.4f} in [2.40, 2.60], {t40:.0f}s")


def test_arithmetic_basket(verdict):
    rf, elapsed = run("basketput40", forest(50, 0.5, 8, 100))
    ok = within(rf.price, 2.08, 2.27)
    assert verdict("5 basketput40", ok, f"forest B=50 {rf.price:.4f} in [2.08, 2.27] ({elapsed:.0f}s)")


def test_maxcall50(verdict):
    start = time.perf_counter()
    rf = run("maxcall50", forest(10, 0.5, 100, 100))[0].price
    single = run("maxcall50", tree(100, 100))[0].price
    elapsed = time.perf_counter() - start
    ok = within(rf, 67.8, 69.95) and within(single, 66.5, 68.0) and rf > single and elapsed <= 1200
    assert verdict("6 maxcall50", ok, f"forest {rf:.3f} in [67.8, 69.95]; tree {single:.3f} in [66.5, 68.0]; "
                                      f"forest > tree; {elapsed:.0f}s")


def test_heston(verdict):
    prices = {
        "polynomial": run("hestonput", PolynomialSpec(3))[0].price,
        "tree": run("hestonput", tree(5, 100))[0].price,
        "forest": run("hestonput", forest(10, 0.5, 5, 100))[0].price,
    }
    spread = max(prices.values()) - min(prices.values())
    lsm = prices["polynomial"]
    ok = abs(lsm - 1.70) <= 0.07 and spread <= 0.07
    shown = ", ".join(f"{k} {v:.4f}" for k, v in prices.items())
    assert verdict("7 heston", ok, f"{shown}; spread {spread:.4f} <= 0.07; LSM within 1.70 +- 0.07")


def test_property_suite_runtime(verdict):
    tests = Path(__file__).parent
    start = time.perf_counter()
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", "-m", "not acceptance",
                           str(tests)], capture_output=True, text=True)
    elapsed = time.perf_counter() - start
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    ok = proc.returncode == 0 and elapsed <= 180
    assert verdict("8 property suite", ok, f"{tail}; {elapsed:.0f}s <= 180s")
