"""Trace metrics: regret curves, percentile aggregation, bias estimates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..framework import RunTrace

__all__ = ["UnsupportedMetric", "cumulative_regret", "aggregate",
           "AggregateCurves", "evaluator_bias", "emitted_counts"]


class UnsupportedMetric(RuntimeError):
    """The trace lacks the ground truth this metric needs."""


def cumulative_regret(trace: RunTrace) -> np.ndarray:
    """Prefix sums of per-round instantaneous pseudo-regret (length T)."""
    if not trace.rounds or trace.rounds[0].instant_regret is None:
        raise UnsupportedMetric("trace carries no instantaneous regret; "
                                "use cumulative reward instead")
    inst = np.array([e.instant_regret for e in trace.rounds], dtype=np.float64)
    return np.cumsum(inst)


@dataclass
class AggregateCurves:
    mean: np.ndarray
    p20: np.ndarray
    p80: np.ndarray


def _nearest_rank(sorted_values: np.ndarray, q: float) -> np.ndarray:
    """Nearest-rank percentile: the ceil(q*n)-th order statistic."""
    n = sorted_values.shape[0]
    k = max(1, int(np.ceil(q * n)))
    return sorted_values[k - 1]


def aggregate(curves) -> AggregateCurves:
    """Pointwise mean and 20th/80th nearest-rank percentiles over runs.

    Accepts a list of equal-length per-round value sequences (e.g. regret
    curves) or ``RunTrace`` objects.
    """
    arrays = [c.regret_curve() if isinstance(c, RunTrace) else np.asarray(c, dtype=np.float64)
              for c in curves]
    if not arrays:
        raise ValueError("aggregate needs at least one curve")
    lengths = {len(a) for a in arrays}
    if len(lengths) != 1:
        raise ValueError(f"curves have unequal lengths {sorted(lengths)}")
    stacked = np.vstack(arrays)
    ordered = np.sort(stacked, axis=0)
    # Mean over the sorted stack: bitwise permutation-invariant.
    return AggregateCurves(mean=ordered.mean(axis=0),
                           p20=_nearest_rank(ordered, 0.2),
                           p80=_nearest_rank(ordered, 0.8))


def emitted_counts(trace: RunTrace, n_actions: int) -> np.ndarray:
    """Number of evaluator-synthesized outcomes per action."""
    counts = np.zeros(n_actions, dtype=np.int64)
    for v in trace.virtual:
        counts[v.action] += 1
    return counts


def evaluator_bias(trace: RunTrace, environment) -> np.ndarray:
    """Per-action bias of the synthesized outcomes against E[y|a].

    delta_a = mean of emitted outcomes for a minus the environment's marginal
    mean; NaN for actions the evaluator never served.
    """
    K = environment.n_actions
    sums = np.zeros(K)
    counts = np.zeros(K)
    for v in trace.virtual:
        sums[v.action] += v.reward
        counts[v.action] += 1
    out = np.full(K, np.nan)
    for a in range(K):
        if counts[a] > 0:
            out[a] = sums[a] / counts[a] - environment.marginal_mean(a)
    return out
