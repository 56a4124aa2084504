"""Experiment configs, the built-in catalog and the sweep runner.

A config is a mapping (usually loaded from YAML) with these blocks::

    experiment: custom            # free-form id, stamped on every row
    model:                        # black_scholes or heston
      type: black_scholes
      s0: 100                     # scalar (needs d) or one value per asset
      d: 2
      r: 0.05
      sigma: 0.2                  # scalar or per asset
      dividend: 0.1               # scalar or per asset
      rho: 0.0                    # constant pairwise correlation or a d x d matrix
    # heston model keys: s0, v0, kappa, theta, xi, rho, r
    payoff: {kind: MaxCall, strike: 100}     # weights: list or "equal" for baskets
    grid: {maturity: 3, dates: 9, substeps: 10}   # or exercise_dates: [0, ...]
    regressors:                   # list values are swept (cartesian product)
      - {type: polynomial, degree: [3, 5]}
      - {type: tree, max_depth: [5, 10], min_samples_leaf: [100], split: random}
      - {type: forest, num_trees: [10], max_samples: [0.5], max_depth: [8],
         min_samples_leaf: [100], bootstrap: true}
    scenarios:                    # optional; each overrides model/payoff/grid/regressors
      - {label: s0=90, model: {s0: 90}}
    paths: {fit: 100000, resim: 100000}
    seed: 2024
    itm_filter: true
    workers: 1
    output: results.csv

Point ``i`` of the sweep (scenarios outermost, then regressors in listed
order) runs with seed ``derive_seed(seed, i)``.
"""
from __future__ import annotations

import copy
import csv
import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from ._seeding import derive_seed
from .engine import fit_and_price
from .ensemble import ForestFitConfig, ForestSpec, PolynomialSpec, RegressorSpec, TreeSpec
from .models import BlackScholesParams, HestonParams, TimeGrid
from .payoffs import Payoff, PayoffKind
from .tree import TreeFitConfig

log = logging.getLogger(__name__)

CSV_HEADER = ("experiment", "regressor", "price", "std_error", "ci_lo", "ci_hi", "fit_s", "price_s",
              "seed", "error")


class ConfigError(ValueError):
    """Invalid experiment config; the message names the offending field."""


@dataclass
class ResultRow:
    experiment: str
    regressor: str
    price: float
    std_error: float
    ci_lo: float
    ci_hi: float
    fit_s: float
    price_s: float
    seed: int
    error: str = ""


@dataclass
class Scenario:
    label: str
    model: BlackScholesParams | HestonParams
    payoff: Payoff
    grid: TimeGrid
    regressors: list[RegressorSpec]


@dataclass
class ExperimentConfig:
    experiment: str
    scenarios: list[Scenario]
    m_fit: int = 100_000
    m_resim: int = 100_000
    seed: int = 0
    itm_filter: bool = True
    workers: int = 1
    output: Path | None = None
    description: str = ""
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def points(self) -> list[tuple[Scenario, RegressorSpec]]:
        return [(sc, spec) for sc in self.scenarios for spec in sc.regressors]


# ---------------------------------------------------------------- parsing

_TOP_KEYS = {"experiment", "description", "model", "payoff", "grid", "regressors", "scenarios", "paths",
             "seed", "itm_filter", "workers", "output"}


def _require(block: dict, key: str, where: str):
    if key not in block:
        raise ConfigError(f"{where}.{key}: required field is missing")
    return block[key]


def _check_keys(block: Any, allowed: set[str], where: str) -> dict:
    if not isinstance(block, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(block).__name__}")
    unknown = sorted(set(block) - allowed)
    if unknown:
        raise ConfigError(f"{where}.{unknown[0]}: unknown field")
    return block


def _wrap(where: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def parse_model(block: dict, where: str = "model") -> BlackScholesParams | HestonParams:
    kind = block.get("type", "black_scholes")
    if kind == "heston":
        _check_keys(block, {"type", "s0", "v0", "kappa", "theta", "xi", "rho", "r"}, where)
        args = {k: float(_require(block, k, where)) for k in ("s0", "v0", "kappa", "theta", "xi", "rho", "r")}
        return _wrap(where, HestonParams, **args)
    if kind != "black_scholes":
        raise ConfigError(f"{where}.type: expected 'black_scholes' or 'heston', got {kind!r}")
    _check_keys(block, {"type", "d", "s0", "r", "sigma", "dividend", "rho"}, where)
    s0 = np.atleast_1d(np.asarray(_require(block, "s0", where), dtype=float))
    if s0.size == 1:
        s0 = np.full(int(block.get("d", 1)), s0[0])
    elif "d" in block and int(block["d"]) != s0.size:
        raise ConfigError(f"{where}.d: {block['d']} disagrees with {s0.size} initial spots")
    d = s0.size
    sigma = np.asarray(_require(block, "sigma", where), dtype=float)
    dividend = np.asarray(block.get("dividend", 0.0), dtype=float)
    for name, arr in (("sigma", sigma), ("dividend", dividend)):
        if arr.ndim and arr.size != d:
            raise ConfigError(f"{where}.{name}: expected {d} values, got {arr.size}")
    rho = np.asarray(block.get("rho", 0.0), dtype=float)
    return _wrap(where, BlackScholesParams, s0, float(_require(block, "r", where)), sigma, dividend, rho)


def parse_payoff(block: dict, dim: int, where: str = "payoff") -> Payoff:
    _check_keys(block, {"kind", "strike", "weights"}, where)
    kind = _require(block, "kind", where)
    try:
        kind = PayoffKind(kind)
    except ValueError:
        options = ", ".join(k.value for k in PayoffKind)
        raise ConfigError(f"{where}.kind: expected one of {options}, got {kind!r}") from None
    weights = block.get("weights")
    if weights == "equal":
        weights = np.full(dim, 1.0 / dim)
    elif weights is not None:
        weights = np.asarray(weights, dtype=float)
    return _wrap(where, Payoff, kind, float(_require(block, "strike", where)), weights)


def parse_grid(block: dict, where: str = "grid") -> TimeGrid:
    _check_keys(block, {"maturity", "dates", "substeps", "exercise_dates"}, where)
    substeps = int(block.get("substeps", 10))
    if "exercise_dates" in block:
        return _wrap(where, TimeGrid, tuple(block["exercise_dates"]), substeps)
    return _wrap(where, TimeGrid.uniform, float(_require(block, "maturity", where)),
                 int(_require(block, "dates", where)), substeps)


def _sweep(block: dict, keys: list[str]) -> list[dict]:
    axes = [block[k] if isinstance(block[k], list) else [block[k]] for k in keys if k in block]
    present = [k for k in keys if k in block]
    return [dict(zip(present, combo)) for combo in itertools.product(*axes)]


_TREE_KEYS = ["max_depth", "min_samples_leaf", "split", "midpoint_prob"]
_FOREST_KEYS = ["num_trees", "max_samples", "bootstrap"] + _TREE_KEYS


def _tree_config(point: dict, where: str) -> TreeFitConfig:
    return _wrap(where, TreeFitConfig, max_depth=int(point.get("max_depth", 5)),
                 min_samples_leaf=int(point.get("min_samples_leaf", 1)),
                 split_strategy=point.get("split", "random"),
                 midpoint_prob=float(point.get("midpoint_prob", 0.0)))


def parse_regressors(blocks: Any, where: str = "regressors") -> list[RegressorSpec]:
    if not isinstance(blocks, list):
        raise ConfigError(f"{where}: expected a list")
    specs: list[RegressorSpec] = []
    for i, block in enumerate(blocks):
        at = f"{where}[{i}]"
        kind = _check_keys(block, {"type", "degree", *_FOREST_KEYS}, at).get("type")
        if kind == "polynomial":
            _check_keys(block, {"type", "degree"}, at)
            for point in _sweep(block, ["degree"]):
                degree = int(point.get("degree", 3))
                if degree < 0:
                    raise ConfigError(f"{at}.degree: must be >= 0")
                specs.append(PolynomialSpec(degree))
        elif kind == "tree":
            _check_keys(block, {"type", *_TREE_KEYS}, at)
            specs.extend(TreeSpec(_tree_config(p, at)) for p in _sweep(block, _TREE_KEYS))
        elif kind == "forest":
            for p in _sweep(block, _FOREST_KEYS):
                cfg = _wrap(at, ForestFitConfig, num_trees=int(p.get("num_trees", 10)),
                            tree_config=_tree_config(p, at), bootstrap=bool(p.get("bootstrap", True)),
                            max_samples=float(p.get("max_samples", 1.0)))
                specs.append(ForestSpec(cfg))
        else:
            raise ConfigError(f"{at}.type: expected 'polynomial', 'tree' or 'forest', got {kind!r}")
    return specs


def _merge(base: dict, override: dict | None) -> dict:
    out = copy.deepcopy(base)
    out.update(copy.deepcopy(override or {}))
    return out


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a config mapping; raises :class:`ConfigError` naming the bad field."""
    _check_keys(raw, _TOP_KEYS, "config")
    scenario_blocks = raw.get("scenarios") or [{"label": ""}]
    if not isinstance(scenario_blocks, list):
        raise ConfigError("config.scenarios: expected a list")
    scenarios = []
    for i, sc in enumerate(scenario_blocks):
        at = f"scenarios[{i}]"
        _check_keys(sc, {"label", "model", "payoff", "grid", "regressors"}, at)
        model_block = _merge(raw.get("model") or {}, sc.get("model"))
        payoff_block = _merge(raw.get("payoff") or {}, sc.get("payoff"))
        grid_block = _merge(raw.get("grid") or {}, sc.get("grid"))
        prefix = at + "." if "scenarios" in raw else ""
        if not model_block:
            raise ConfigError(f"{prefix}model: required block is missing")
        model = parse_model(model_block, prefix + "model")
        payoff = parse_payoff(payoff_block, model.dim, prefix + "payoff")
        grid = parse_grid(grid_block, prefix + "grid")
        regressors = parse_regressors(sc.get("regressors", raw.get("regressors", [])),
                                      prefix + "regressors")
        scenarios.append(Scenario(str(sc.get("label", "")), model, payoff, grid, regressors))
    paths = _check_keys(raw.get("paths", {}), {"fit", "resim"}, "paths")
    m_fit = int(paths.get("fit", 100_000))
    m_resim = int(paths.get("resim", m_fit))
    if m_fit < 1 or m_resim < 1:
        raise ConfigError("paths: fit and resim must be >= 1")
    workers = int(raw.get("workers", 1))
    if workers < 1:
        raise ConfigError("workers: must be >= 1")
    output = raw.get("output")
    return ExperimentConfig(
        experiment=str(raw.get("experiment", "custom")), scenarios=scenarios, m_fit=m_fit,
        m_resim=m_resim, seed=int(raw.get("seed", 0)), itm_filter=bool(raw.get("itm_filter", True)),
        workers=workers, output=Path(output) if output else None,
        description=str(raw.get("description", "")), raw=copy.deepcopy(raw))


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from exc
    return parse_config(raw or {})


# ---------------------------------------------------------------- catalog

_PUT1D_MODEL = {"type": "black_scholes", "d": 1, "s0": 100, "r": 0.1, "sigma": 0.25, "dividend": 0.0}
_MAXCALL_MODEL = {"type": "black_scholes", "s0": 100, "r": 0.05, "sigma": 0.2, "dividend": 0.1, "rho": 0.0}
_BASKET_MODEL = {"type": "black_scholes", "s0": 100, "r": 0.05, "sigma": 0.2, "dividend": 0.0, "rho": 0.2}
_HESTON_MODEL = {"type": "heston", "s0": 100, "v0": 0.01, "kappa": 2.0, "theta": 0.01, "xi": 0.2,
                 "rho": -0.3, "r": 0.1}
_ONE_YEAR_10 = {"maturity": 1.0, "dates": 10}
_THREE_YEARS_9 = {"maturity": 3.0, "dates": 9}


def _geoput(d: int, degree: int) -> dict:
    return {
        "model": {**_BASKET_MODEL, "d": d},
        "payoff": {"kind": "GeometricBasketPut", "strike": 100},
        "grid": _ONE_YEAR_10,
        "regressors": [
            {"type": "polynomial", "degree": degree},
            {"type": "tree", "max_depth": [2, 5, 8, 15], "min_samples_leaf": [1, 100]},
            {"type": "forest", "num_trees": [1, 5, 10], "max_samples": [0.5, 0.9],
             "max_depth": 8, "min_samples_leaf": 100},
        ],
    }


BUILTINS: dict[str, dict] = {
    "put1d": {
        "description": "1-D Bermudan put, K=110, S0=100, sigma=0.25, r=0.1, T=1, N=10; reference 11.987",
        "model": _PUT1D_MODEL,
        "payoff": {"kind": "Put1D", "strike": 110},
        "grid": _ONE_YEAR_10,
        "regressors": [
            {"type": "polynomial", "degree": 3},
            {"type": "tree", "max_depth": [2, 5, 10, 20], "min_samples_leaf": [1, 100],
             "split": ["random", "best"]},
            {"type": "forest", "num_trees": [1, 5, 10], "max_depth": 5, "min_samples_leaf": 100},
        ],
    },
    "maxcall2": {
        "description": "Max-call on 2 assets, K=100, T=3, sigma=0.2, r=0.05, delta=0.1, rho=0, N=9; "
                       "references 13.90 / 8.08 / 21.34 for S0 = 100 / 90 / 110",
        "model": {**_MAXCALL_MODEL, "d": 2},
        "payoff": {"kind": "MaxCall", "strike": 100},
        "grid": _THREE_YEARS_9,
        "scenarios": [{"label": "s0=100"}, {"label": "s0=90", "model": {"s0": 90}},
                      {"label": "s0=110", "model": {"s0": 110}}],
        "regressors": [
            {"type": "polynomial", "degree": 5},
            {"type": "tree", "max_depth": [5, 10, 20], "min_samples_leaf": [1, 100]},
            {"type": "forest", "num_trees": [10, 50], "max_samples": [0.1, 0.5, 0.9],
             "max_depth": 10, "min_samples_leaf": 50},
        ],
    },
    "geoput2": {"description": "Geometric basket put, d=2, K=S0=100, sigma=0.2, rho=0.2, r=0.05, T=1, N=10; "
                               "reference 4.57", **_geoput(2, 3)},
    "geoput10": {"description": "Geometric basket put, d=10, same market; reference 2.92", **_geoput(10, 3)},
    "geoput40": {"description": "Geometric basket put, d=40, same market; reference 2.52", **_geoput(40, 1)},
    "basketput40": {
        "description": "Arithmetic basket put, d=40, weights 1/d, K=S0=100, sigma=0.2, rho=0.2, r=0.05, "
                       "T=1, N=10; reference band [2.15, 2.22]",
        "model": {**_BASKET_MODEL, "d": 40},
        "payoff": {"kind": "ArithmeticBasketPut", "strike": 100, "weights": "equal"},
        "grid": _ONE_YEAR_10,
        "regressors": [
            {"type": "polynomial", "degree": 1},
            {"type": "tree", "max_depth": [2, 5, 8], "min_samples_leaf": [1, 100]},
            {"type": "forest", "num_trees": [10, 50], "max_samples": 0.5, "max_depth": 8,
             "min_samples_leaf": 100},
        ],
    },
    "maxcall50": {
        "description": "Max-call on 50 assets, K=S0=100, T=3, sigma=0.2, delta=0.1, rho=0, r=0.05, N=9; "
                       "reference 95% interval [69.56, 69.95]",
        "model": {**_MAXCALL_MODEL, "d": 50},
        "payoff": {"kind": "MaxCall", "strike": 100},
        "grid": _THREE_YEARS_9,
        "regressors": [
            {"type": "polynomial", "degree": 1},
            {"type": "tree", "max_depth": [50, 100, 200], "min_samples_leaf": [50, 100]},
            {"type": "forest", "num_trees": 10, "max_samples": [0.5, 0.7, 0.9], "max_depth": 100,
             "min_samples_leaf": 100},
        ],
    },
    "hestonput": {
        "description": "Put in the Heston model, K=S0=100, T=1, v0=0.01, theta=0.01, xi=0.2, kappa=2, "
                       "rho=-0.3, r=0.1, N=10; no reference price, compare with polynomial LSM",
        "model": _HESTON_MODEL,
        "payoff": {"kind": "Put1D", "strike": 100},
        "grid": {**_ONE_YEAR_10, "substeps": 10},
        "regressors": [
            {"type": "polynomial", "degree": 3},
            {"type": "tree", "max_depth": [2, 5, 10, 15], "min_samples_leaf": [1, 100]},
            {"type": "forest", "num_trees": [1, 5, 10], "max_samples": [0.5, 0.9], "max_depth": 5,
             "min_samples_leaf": 100},
        ],
    },
    "lsm-baselines": {
        "description": "Polynomial least-squares baselines for every built-in product",
        "scenarios": [
            {"label": "put1d", "model": _PUT1D_MODEL, "payoff": {"kind": "Put1D", "strike": 110},
             "grid": _ONE_YEAR_10, "regressors": [{"type": "polynomial", "degree": [1, 3]}]},
            {"label": "maxcall2", "model": {**_MAXCALL_MODEL, "d": 2},
             "payoff": {"kind": "MaxCall", "strike": 100}, "grid": _THREE_YEARS_9,
             "regressors": [{"type": "polynomial", "degree": [3, 5]}]},
            {"label": "geoput2", "model": {**_BASKET_MODEL, "d": 2},
             "payoff": {"kind": "GeometricBasketPut", "strike": 100}, "grid": _ONE_YEAR_10,
             "regressors": [{"type": "polynomial", "degree": 3}]},
            {"label": "geoput10", "model": {**_BASKET_MODEL, "d": 10},
             "payoff": {"kind": "GeometricBasketPut", "strike": 100}, "grid": _ONE_YEAR_10,
             "regressors": [{"type": "polynomial", "degree": [1, 3]}]},
            {"label": "geoput40", "model": {**_BASKET_MODEL, "d": 40},
             "payoff": {"kind": "GeometricBasketPut", "strike": 100}, "grid": _ONE_YEAR_10,
             "regressors": [{"type": "polynomial", "degree": 1}]},
            {"label": "basketput40", "model": {**_BASKET_MODEL, "d": 40},
             "payoff": {"kind": "ArithmeticBasketPut", "strike": 100, "weights": "equal"},
             "grid": _ONE_YEAR_10, "regressors": [{"type": "polynomial", "degree": 1}]},
            {"label": "maxcall50", "model": {**_MAXCALL_MODEL, "d": 50},
             "payoff": {"kind": "MaxCall", "strike": 100}, "grid": _THREE_YEARS_9,
             "regressors": [{"type": "polynomial", "degree": 1}]},
            {"label": "hestonput", "model": _HESTON_MODEL, "payoff": {"kind": "Put1D", "strike": 100},
             "grid": {**_ONE_YEAR_10, "substeps": 10}, "regressors": [{"type": "polynomial", "degree": 3}]},
        ],
    },
}


def list_experiments() -> dict[str, str]:
    """Built-in experiment ids mapped to their parameter descriptions."""
    return {name: cfg["description"] for name, cfg in BUILTINS.items()}


def builtin_config(name: str, **overrides) -> ExperimentConfig:
    """Parsed built-in config; ``overrides`` replace top-level keys (seed, paths, output, ...)."""
    if name not in BUILTINS:
        raise ConfigError(f"experiment: unknown built-in {name!r}; choose from {', '.join(BUILTINS)}")
    raw = {"experiment": name, "seed": 2024, "paths": {"fit": 100_000, "resim": 100_000},
           **copy.deepcopy(BUILTINS[name])}
    raw.update({k: v for k, v in overrides.items() if v is not None})
    return parse_config(raw)


# ---------------------------------------------------------------- running

def _run_point(config: ExperimentConfig, index: int, scenario: Scenario, spec: RegressorSpec) -> ResultRow:
    name = f"{config.experiment}/{scenario.label}" if scenario.label else config.experiment
    seed = derive_seed(config.seed, index)
    try:
        res = fit_and_price(scenario.model, scenario.payoff, scenario.grid, spec, config.m_fit,
                            config.m_resim, seed, config.itm_filter)
    except Exception as exc:  # one bad point must not abort the sweep
        log.exception("point %d (%s, %s) failed", index, name, spec.describe())
        nan = float("nan")
        return ResultRow(name, spec.describe(), nan, nan, nan, nan, nan, nan, seed,
                         f"{type(exc).__name__}: {exc}")
    return ResultRow(name, spec.describe(), res.price, res.std_error, res.ci95[0], res.ci95[1],
                     res.diagnostics["fit_seconds"], res.diagnostics["price_seconds"], seed)


def run_experiment(config: ExperimentConfig, output: str | Path | None = None) -> list[ResultRow]:
    """Price every sweep point; writes the CSV when an output path is known."""
    points = config.points
    jobs = list(enumerate(points))
    if config.workers <= 1:
        rows = [_run_point(config, i, sc, spec) for i, (sc, spec) in jobs]
    else:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            rows = list(pool.map(lambda job: _run_point(config, job[0], *job[1]), jobs))
    target = output or config.output
    if target is not None:
        write_csv(rows, target)
    return rows


def write_csv(rows: list[ResultRow], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for row in rows:
            # repr keeps floats bit-exact through a round trip
            writer.writerow([repr(v) if isinstance(v, float) else v for v in astuple_row(row)])


def astuple_row(row: ResultRow) -> tuple:
    return tuple(getattr(row, f.name) for f in fields(ResultRow))


def read_csv(path: str | Path) -> list[ResultRow]:
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {reader.fieldnames}")
        out = []
        for rec in reader:
            out.append(ResultRow(
                rec["experiment"], rec["regressor"],
                *(float(rec[k]) for k in ("price", "std_error", "ci_lo", "ci_hi", "fit_s", "price_s")),
                int(rec["seed"]), rec["error"]))
        return out


def summarize(rows: list[ResultRow]) -> str:
    """Fixed-width table for the terminal."""
    if not rows:
        return "(no sweep points)"
    width = max(len(r.regressor) for r in rows)
    exp_width = max(len(r.experiment) for r in rows)
    lines = [f"{'experiment':<{exp_width}}  {'regressor':<{width}}  {'price':>9}  {'stderr':>7}  {'fit s':>7}"]
    for r in rows:
        if r.error:
            lines.append(f"{r.experiment:<{exp_width}}  {r.regressor:<{width}}  FAILED: {r.error}")
        else:
            lines.append(f"{r.experiment:<{exp_width}}  {r.regressor:<{width}}  {r.price:9.4f}  "
                         f"{r.std_error:7.4f}  {r.fit_s:7.1f}")
    return "\n".join(lines)
