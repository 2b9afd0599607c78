"""Offline evaluators: synthesize outcomes from logged data.

Each evaluator implements ``get_outcome(context, action) -> float | None``
with ``None`` meaning it cannot synthesize a feedback. Every evaluator's
total number of non-None returns per action is finite (record counts for the
matchers, the effective-sample-size budget for inverse-propensity weighting,
the confidence-dominance condition for the linear-regression evaluator), so
the interleaving loop of the framework always terminates.

Matching evaluators never fabricate outcomes: every value they return is the
outcome field of some logged record, and each record is used at most once.
"""

from __future__ import annotations

import itertools
import math
from typing import Callable, Optional, Sequence

import numpy as np

from .core import (Context, DataError, IdPool, LoggedDataset, context_key,
                   sample_and_remove)
from .forest import MultiActionForest

__all__ = [
    "NullEvaluator",
    "ExactMatching",
    "PropensityScoreMatching",
    "IPSWeighting",
    "LinearRegressionEvaluator",
    "MatchingOnForest",
    "HistoricalAverage",
    "stratify",
    "default_pivots",
    "FrequencyPropensity",
]


class NullEvaluator:
    """Always returns None; reduces the framework to pure online learning."""

    def get_outcome(self, context: Context, action: int) -> Optional[float]:
        return None


class ExactMatching:
    """Serve the outcome of a uniformly drawn record with identical context
    and action, deleting it; stop an action permanently on its first failed
    lookup."""

    def __init__(self, dataset: LoggedDataset, rng: np.random.Generator):
        self.dataset = dataset
        self.rng = rng
        self.stopped = [False] * dataset.n_actions

    def get_outcome(self, context: Context, action: int) -> Optional[float]:
        a = int(action)
        if self.stopped[a]:
            return None
        pool = self.dataset.exact_pool(context, a)
        if pool is not None and len(pool):
            rec = sample_and_remove(self.dataset, pool, self.rng)
            return rec.outcome
        self.stopped[a] = True
        return None


def default_pivots(n_actions: int, spacing: float = 0.1) -> np.ndarray:
    """Uniform grid over [0,1]^(K-1) with the given per-coordinate spacing."""
    if n_actions < 2:
        raise ValueError("pivots need at least two actions")
    axis = np.round(np.arange(0.0, 1.0 + spacing / 2, spacing), 12)
    grid = np.array(list(itertools.product(axis, repeat=n_actions - 1)))
    return grid


def _lex_order(pivots: np.ndarray) -> np.ndarray:
    """Pivot rows sorted lexicographically (first coordinate primary)."""
    pivots = np.asarray(pivots, dtype=np.float64)
    if pivots.ndim == 1:
        pivots = pivots[:, None]
    if pivots.size == 0:
        raise ValueError("pivot set must be non-empty")
    return pivots[np.lexsort(pivots.T[::-1])]


def _nearest_pivot(p: np.ndarray, ordered_pivots: np.ndarray) -> tuple[float, ...]:
    p = np.atleast_1d(np.asarray(p, dtype=np.float64))
    d2 = ((ordered_pivots - p[None, :]) ** 2).sum(axis=1)
    return tuple(ordered_pivots[int(np.argmin(d2))])


def stratify(p: np.ndarray, pivots: np.ndarray) -> tuple[float, ...]:
    """Round a propensity vector to its nearest pivot (L2).

    Equal distances resolve to the lexicographically smallest pivot.
    """
    return _nearest_pivot(p, _lex_order(pivots))


class FrequencyPropensity:
    """Plug-in propensity model p(a | x) = count(a, x) / count(x).

    Requires discrete contexts; unseen query contexts raise ``DataError``.
    """

    def __init__(self, dataset: LoggedDataset):
        self.n_actions = dataset.n_actions
        self._counts: dict[bytes, np.ndarray] = {}
        for rec in dataset.records():
            key = context_key(rec.context)
            if key not in self._counts:
                self._counts[key] = np.zeros(self.n_actions)
            self._counts[key][rec.action] += 1.0

    def __call__(self, context: Context) -> np.ndarray:
        key = context_key(context)
        counts = self._counts.get(key)
        if counts is None:
            raise DataError("context never observed in the logged data; "
                            "frequency-based propensities are undefined for it")
        return counts / counts.sum()


class PropensityScoreMatching:
    """Match on stratified propensity vectors instead of raw contexts.

    Records are bucketed by (nearest pivot of their first K-1 propensities,
    action) at construction. A query computes the same stratum for its own
    propensity vector and draws uniformly from the bucket, deleting the
    record; an action stops permanently on its first empty bucket.

    ``propensity`` maps a context to a length-K probability vector. When
    omitted, a frequency estimate is fit on the dataset (discrete contexts
    only). Records must carry ``propensity_vector``; without it the record's
    vector is also taken from the model.
    """

    def __init__(self, dataset: LoggedDataset, rng: np.random.Generator,
                 propensity: Callable[[Context], np.ndarray] | None = None,
                 pivots: np.ndarray | None = None):
        self.dataset = dataset
        self.rng = rng
        self.stopped = [False] * dataset.n_actions
        self.pivots = _lex_order(pivots if pivots is not None
                                 else default_pivots(dataset.n_actions))
        self.propensity = propensity if propensity is not None else FrequencyPropensity(dataset)
        self._buckets: dict[tuple, IdPool] = {}
        for rec in dataset.records():
            if rec.propensity_vector is not None:
                p = np.asarray(rec.propensity_vector, dtype=np.float64)
            else:
                p = np.asarray(self.propensity(rec.context))[:dataset.n_actions - 1]
            key = (_nearest_pivot(p, self.pivots), rec.action)
            self._buckets.setdefault(key, IdPool()).add(rec.id)

    def stratum(self, p: np.ndarray) -> tuple[float, ...]:
        return _nearest_pivot(p, self.pivots)

    def get_outcome(self, context: Context, action: int) -> Optional[float]:
        a = int(action)
        if self.stopped[a]:
            return None
        p = np.asarray(self.propensity(context))[:self.dataset.n_actions - 1]
        key = (self.stratum(p), a)
        pool = self._buckets.get(key)
        if pool is not None and len(pool):
            rec = sample_and_remove(self.dataset, pool, self.rng)
            pool.discard(rec.id)
            return rec.outcome
        self.stopped[a] = True
        return None


class IPSWeighting:
    """Emit the inverse-propensity-weighted mean of each action, floor of the
    effective sample size many times.

    ybar_a = (sum y_i / p_i) / (sum 1 / p_i) over records with action a;
    the per-action budget is N_a = (sum 1/p_i)^2 / sum (1/p_i)^2, the
    effective count of equally weighted samples.
    """

    def __init__(self, dataset: LoggedDataset):
        K = dataset.n_actions
        w_sum = np.zeros(K)
        wy_sum = np.zeros(K)
        w2_sum = np.zeros(K)
        for rec in dataset.records():
            if rec.propensity_chosen is None:
                raise DataError(f"record {rec.id} lacks propensity_chosen, "
                                "required for inverse-propensity weighting")
            w = 1.0 / rec.propensity_chosen
            w_sum[rec.action] += w
            wy_sum[rec.action] += w * rec.outcome
            w2_sum[rec.action] += w * w
        self.means = np.full(K, np.nan)
        self.budgets = np.zeros(K)
        nonzero = w_sum > 0
        self.means[nonzero] = wy_sum[nonzero] / w_sum[nonzero]
        self.budgets[nonzero] = w_sum[nonzero] ** 2 / w2_sum[nonzero]
        self.initial_budgets = self.budgets.copy()

    def get_outcome(self, context: Context, action: int) -> Optional[float]:
        a = int(action)
        if self.budgets[a] >= 1.0:
            self.budgets[a] -= 1.0
            return float(self.means[a])
        return None


class LinearRegressionEvaluator:
    """Ridge fit on the log, emitted while the offline confidence dominates.

    At init, V_hat = I + sum phi phi^T and theta_hat = V_hat^-1 sum y phi over
    the logged records. A query for phi = phi(x, a) returns phi . theta_hat
    while the online oracle's uncertainty in direction phi, measured after
    hypothetically absorbing phi, still exceeds the offline uncertainty:
    phi^T (V + phi phi^T)^-1 phi > phi^T V_hat^-1 phi. The oracle's V grows
    through the framework's subsequent ``update`` call, so the budget is
    self-limiting. Pairs with a single oracle whose V it reads.
    """

    def __init__(self, dataset: LoggedDataset, feature_map, oracle):
        self.feature_map = feature_map
        self.oracle = oracle
        dim = feature_map.dim
        V_hat = np.eye(dim)
        b = np.zeros(dim)
        for rec in dataset.records():
            phi = feature_map(rec.context, rec.action)
            V_hat += np.outer(phi, phi)
            b += rec.outcome * phi
        self.V_hat = V_hat
        self.V_hat_inv = np.linalg.inv(V_hat)
        self.theta_hat = np.linalg.solve(V_hat, b)

    def get_outcome(self, context: Context, action: int) -> Optional[float]:
        phi = self.feature_map(context, int(action))
        q = float(phi @ self.oracle.V_inv @ phi)
        online_after = q / (1.0 + q)  # phi^T (V + phi phi^T)^-1 phi
        offline = float(phi @ self.V_hat_inv @ phi)
        if online_after > offline:
            return float(phi @ self.theta_hat)
        return None


class MatchingOnForest:
    """Weighted nearest-neighbor matching through a forest's leaves.

    Picks a uniform tree, then a uniform live record sharing that tree's leaf
    of the query context and the queried action, deletes it, and returns its
    outcome. No stop flags: an empty neighborhood in one tree does not
    preclude later matches through other trees.
    """

    def __init__(self, forest: MultiActionForest, dataset: LoggedDataset,
                 rng: np.random.Generator):
        if forest.record_ids is None:
            raise ValueError("matching requires a forest trained on logged records")
        self.forest = forest
        self.dataset = dataset
        self.rng = rng
        self._pools: dict[tuple[int, int, int], list[int]] = {}

    def _pool(self, b: int, leaf: int, action: int) -> list[int]:
        key = (b, leaf, action)
        pool = self._pools.get(key)
        if pool is None:
            assigned = self.forest.assignments()[b]
            mask = (assigned == leaf) & (self.forest.actions == action)
            pool = [int(rid) for rid in self.forest.record_ids[mask]]
            self._pools[key] = pool
        return pool

    def get_outcome(self, context: Context, action: int) -> Optional[float]:
        x = np.asarray(context, dtype=np.float64)
        b = int(self.rng.random() * self.forest.n_trees)
        leaf = self.forest.trees[b].leaf_for(x)
        pool = self._pool(b, leaf, int(action))
        # Lazy pruning: entries deleted through other trees are dropped on
        # first encounter.
        while pool:
            j = int(self.rng.random() * len(pool))
            rid = pool[j]
            pool[j] = pool[-1]
            pool.pop()
            if rid in self.dataset:
                rec = self.dataset.delete(rid)
                return rec.outcome
        return None


class HistoricalAverage:
    """Serve each logged outcome once for its own action, contexts ignored.

    Equivalent to exact matching with every context collapsed to a single
    dummy value: the induced warm start is the raw per-action empirical
    average of the log.
    """

    def __init__(self, dataset: LoggedDataset, rng: np.random.Generator):
        self.dataset = dataset
        self.rng = rng

    def get_outcome(self, context: Context, action: int) -> Optional[float]:
        pool = self.dataset.action_pool(int(action))
        if pool is not None and len(pool):
            rec = sample_and_remove(self.dataset, pool, self.rng)
            return rec.outcome
        return None
