"""Metrics, closed-form regret bounds, experiment orchestration, and the CLI."""

from .bounds import (BiasedBoundResult, bound_biased, bound_linucb, bound_ucb_em,
                     bound_ucb_ipsw, bound_ucb_psm, forest_constants)
from .metrics import AggregateCurves, aggregate, cumulative_regret, evaluator_bias

__all__ = [
    "AggregateCurves",
    "aggregate",
    "cumulative_regret",
    "evaluator_bias",
    "BiasedBoundResult",
    "bound_ucb_em",
    "bound_ucb_psm",
    "bound_ucb_ipsw",
    "bound_biased",
    "bound_linucb",
    "forest_constants",
]
