"""Bermudan option pricing by least-squares Monte Carlo with regression trees and random forests."""
from .engine import PolicyModel, PricingResult, fit_and_price, fit_policy, price
from .ensemble import (ForestFitConfig, ForestSpec, PolynomialModel, PolynomialSpec, RandomForest, TreeSpec,
                       fit_forest, fit_polynomial, predict_forest, predict_polynomial)
from .models import (BlackScholesParams, HestonParams, PathSet, TimeGrid, correlation_factor,
                     simulate_black_scholes, simulate_heston)
from .oracles import LatticeConfig, bs_european_put, crr_bermudan_1d
from .payoffs import CashflowMatrix, Payoff, PayoffKind, cashflows, evaluate
from .tree import RegressionTree, SplitStrategy, TreeFitConfig, best_split_1d, fit_tree, training_mse

__version__ = "0.1.0"
