"""Closed-form upper bounds on expected cumulative pseudo-regret.

Each calculator evaluates one warm-started algorithm's bound verbatim from
its inputs: the horizon, the per-action optimality gaps, and a description of
how much logged data the evaluator can serve. All of them presuppose rewards
in [0,1] (enforced via ``reward_range``) and strictly positive gaps for
suboptimal actions. pi^2 enters at machine precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..forest import ScheduleConstants

__all__ = ["bound_ucb_em", "bound_ucb_psm", "bound_ucb_ipsw", "bound_biased",
           "bound_linucb", "BiasedBoundResult", "forest_constants"]

_PI2_3 = math.pi ** 2 / 3.0


def _check_common(T, gaps, optimal, reward_range):
    if T < 1:
        raise ValueError("T must be >= 1")
    if tuple(reward_range) != (0.0, 1.0):
        raise ValueError("bound calculators require rewards in [0,1]; "
                         f"got range {reward_range}")
    gaps = np.asarray(gaps, dtype=np.float64)
    if gaps[optimal] != 0.0:
        raise ValueError("the optimal action's gap must be zero")
    for a, gap in enumerate(gaps):
        if a != optimal and not gap > 0.0:
            raise ValueError(f"suboptimal action {a} has non-positive gap {gap}")
    return gaps


def bound_ucb_em(T: int, gaps, optimal: int, cell_probs, cell_counts,
                 reward_range=(0.0, 1.0)) -> float:
    """UCB warm-started by exact matching over C context categories.

    ``cell_probs[c]`` is the online probability of category c and
    ``cell_counts[c, a]`` the logged count per (category, action).
    """
    gaps = _check_common(T, gaps, optimal, reward_range)
    P = np.asarray(cell_probs, dtype=np.float64)
    N_ca = np.asarray(cell_counts, dtype=np.float64)
    if np.any(P <= 0) or abs(P.sum() - 1.0) > 1e-9:
        raise ValueError("cell probabilities must be positive and sum to 1")
    N = float(N_ca.sum())
    K = len(gaps)

    A = N
    for a in range(K):
        if a == optimal:
            continue
        thresh = 8.0 * math.log(T + N) / gaps[a] ** 2 + 1.0 + _PI2_3
        A -= np.maximum(0.0, N_ca[:, a] - thresh * P).sum()

    total = 0.0
    for a in range(K):
        if a == optimal:
            continue
        matched = np.min(N_ca[:, a] / P)  # min over donor categories c~
        inner = np.maximum(0.0, 8.0 * math.log(T + A) / gaps[a] ** 2 * P - matched * P).sum()
        total += gaps[a] * (1.0 + _PI2_3 + inner)
    return total


def bound_ucb_psm(T: int, gaps, optimal: int, stratum_probs, stratum_counts,
                  reward_range=(0.0, 1.0)) -> float:
    """UCB warm-started by propensity-score matching over Q strata.

    Same shape as the exact-matching bound with strata replacing context
    categories; the log-shift constant A discounts each cell by its scarcest
    donor stratum.
    """
    gaps = _check_common(T, gaps, optimal, reward_range)
    P = np.asarray(stratum_probs, dtype=np.float64)
    N_ca = np.asarray(stratum_counts, dtype=np.float64)
    if np.any(P <= 0) or abs(P.sum() - 1.0) > 1e-9:
        raise ValueError("stratum probabilities must be positive and sum to 1")
    N = float(N_ca.sum())
    K = len(gaps)

    A = N
    for a in range(K):
        if a == optimal:
            continue
        thresh = 8.0 * math.log(T + N) / gaps[a] ** 2 + 1.0 + _PI2_3
        matched = np.min(N_ca[:, a] / P)
        A -= np.maximum(0.0, matched * P - thresh * P).sum()

    total = 0.0
    for a in range(K):
        if a == optimal:
            continue
        matched = np.min(N_ca[:, a] / P)
        inner = np.maximum(0.0, 8.0 * math.log(T + A) / gaps[a] ** 2 * P - matched * P).sum()
        total += gaps[a] * (1.0 + _PI2_3 + inner)
    return total


def bound_ucb_ipsw(T: int, gaps, optimal: int, ess, reward_range=(0.0, 1.0)) -> float:
    """UCB warm-started by inverse-propensity weighting.

    ``ess[a]`` is the effective sample size budget of action a.
    """
    gaps = _check_common(T, gaps, optimal, reward_range)
    N_a = np.asarray(ess, dtype=np.float64)
    if np.any(N_a < 0):
        raise ValueError("effective sample sizes must be nonnegative")
    horizon = T + float(np.ceil(N_a).sum())
    total = 0.0
    for a in range(len(gaps)):
        if a == optimal:
            continue
        inner = max(0.0, 8.0 / gaps[a] ** 2 * math.log(horizon) - math.floor(N_a[a]))
        total += gaps[a] * (1.0 + _PI2_3 + inner)
    return total


@dataclass(frozen=True)
class BiasedBoundResult:
    value: float
    # Per action: bias small enough for the logged data to help (excess bias
    # below the gap); True for the optimal action by convention.
    sufficiency: np.ndarray


def bound_biased(T: int, gaps, optimal: int, emitted_counts, biases,
                 reward_range=(0.0, 1.0)) -> BiasedBoundResult:
    """Regret bound under biased synthesized outcomes (no ignorability).

    ``emitted_counts[a]`` is the number of outcomes served for a and
    ``biases[a]`` their mean's deviation from E[y|a]. Each arm's factor is
    16/gap^2 * ln(N_a + T) - 2 N_a (1 - max(0, excess bias)/gap) + 1 + pi^2/3,
    clamped at zero so the bound stays a nonnegative regret estimate.
    """
    gaps = _check_common(T, gaps, optimal, reward_range)
    N_a = np.asarray(emitted_counts, dtype=np.float64)
    delta = np.asarray(biases, dtype=np.float64)
    K = len(gaps)
    sufficiency = np.ones(K, dtype=bool)
    total = 0.0
    for a in range(K):
        if a == optimal:
            continue
        excess = max(0.0, delta[a] - delta[optimal])
        sufficiency[a] = excess < gaps[a]
        term = (16.0 / gaps[a] ** 2 * math.log(N_a[a] + T)
                - 2.0 * N_a[a] * (1.0 - excess / gaps[a])
                + 1.0 + _PI2_3)
        total += gaps[a] * max(0.0, term)
    return BiasedBoundResult(value=total, sufficiency=sufficiency)


def bound_linucb(T: int, dim: int, L: float, mode: str = "problem-dependent",
                 delta_min: float | None = None, lambda_min: float = 0.0,
                 n_offline: int = 0, delta: float = 0.05,
                 x_min: float = 1.0) -> float:
    """Regret bound for LinUCB warm-started by the ridge evaluator.

    problem-dependent: 8 d^2 (1 + 2 ln T)/delta_min * ln(1 + T L^2/lambda) + 1
    with lambda the smallest eigenvalue of the offline feature Gram matrix
    (floored at the identity's 1 when no logged data constrains it).

    problem-independent: the high-probability bound
    sqrt(8 (N+T) beta ln((d + (N+T) L^2))) - sqrt(8 beta) min(1, x_min)
    * (2/L^2)(sqrt(1 + N L^2) - 1) with beta = 2 d (1 + 2 ln(1/delta)).
    """
    if T < 1 or dim < 1 or not L > 0:
        raise ValueError("need T >= 1, dim >= 1, L > 0")
    if mode == "problem-dependent":
        if delta_min is None or not delta_min > 0:
            raise ValueError("problem-dependent mode needs delta_min > 0")
        lam = lambda_min if lambda_min > 0 else 1.0
        return (8.0 * dim ** 2 * (1.0 + 2.0 * math.log(T)) / delta_min
                * math.log(1.0 + T * L ** 2 / lam) + 1.0)
    if mode == "problem-independent":
        if not 0 < delta < 1:
            raise ValueError("delta must lie in (0,1)")
        beta = 2.0 * dim * (1.0 + 2.0 * math.log(1.0 / delta))
        n_total = n_offline + T
        first = math.sqrt(8.0 * n_total * beta * math.log(dim + n_total * L ** 2))
        second = (math.sqrt(8.0 * beta) * min(1.0, x_min) * (2.0 / L ** 2)
                  * (math.sqrt(1.0 + n_offline * L ** 2) - 1.0))
        return first - second
    raise ValueError(f"unknown mode {mode!r}")


def forest_constants(alpha: float, d: int, pi_prime: float,
                     omega: float = 0.0) -> dict:
    """Exploration-schedule constants plus the asymptotic regret exponent."""
    consts = ScheduleConstants.from_params(alpha, d, pi_prime)
    return {
        "A": consts.A,
        "beta": consts.beta,
        "epsilon_exponent": consts.exponent,
        "regret_exponent": (1.0 + consts.beta + omega) / 2.0,
    }
