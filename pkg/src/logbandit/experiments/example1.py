"""Monte-Carlo reproduction of the two-type ad-placement example.

Four strategies decide ad placement for 10,000 incoming users, each click
worth $1, with a fresh 400-row log drawn per episode (Binomial clicks at the
true rates over the fixed logged design):

- empirical-average: argmax of the pooled logged click rate, applied to all
  users;
- causal-inference: argmax of the type-weighted logged click rates (weights
  200/400 per type);
- ab-test: per-user fair-coin assignment for the first 4,000 users, then the
  better-tested action for the remaining 6,000;
- ucb-em: UCB warm-started by exact matching on the log, then online.

Expected revenue for the deciding strategies uses the exact post-decision
value (10,000 times the pooled true rate of the chosen action), which leaves
the estimate unbiased while shrinking Monte-Carlo noise; the ab-test and
ucb-em strategies accrue their simulated clicks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import _kernels
from ..environments import Example1Env

__all__ = ["Example1Result", "run_example1", "STRATEGIES",
           "empirical_average_choice", "causal_inference_choice"]

STRATEGIES = ("empirical-average", "causal-inference", "ab-test", "ucb-em")


def empirical_average_choice(clicks: np.ndarray, design: np.ndarray) -> np.ndarray:
    """Pooled-rate comparison: action 0 only when strictly ahead.

    The strictness direction is pinned by the exact convolution oracle for
    this scenario; pooled rates tie with probability ~6%, so it matters.
    """
    pooled0 = (clicks[:, 0] + clicks[:, 1]) / (design[0] + design[1])
    pooled1 = (clicks[:, 2] + clicks[:, 3]) / (design[2] + design[3])
    return (pooled1 >= pooled0).astype(np.int64)


def causal_inference_choice(clicks: np.ndarray, design: np.ndarray) -> np.ndarray:
    """Type-weighted-rate comparison (weights 1/2 per type), ties to action 0.

    The weighted means c00/d0 + c01/d1 vs c10/d2 + c11/d3 are compared in
    exact integer arithmetic (cross-multiplied) so mathematical ties are
    never split by float rounding.
    """
    d = np.asarray(design, dtype=np.int64)
    c = clicks.astype(np.int64)
    lhs = c[:, 2] * d[0] * d[1] * d[3] + c[:, 3] * d[0] * d[1] * d[2]
    rhs = c[:, 0] * d[1] * d[2] * d[3] + c[:, 1] * d[0] * d[2] * d[3]
    return (lhs > rhs).astype(np.int64)


@dataclass
class Example1Result:
    strategy: str
    episodes: int
    mean_revenue: float
    se_revenue: float


def run_example1(strategy: str, rng: np.random.Generator, episodes: int = 100_000,
                 users: int = 10_000, ucb_beta: float = 0.15,
                 test_users: int = 4_000) -> Example1Result:
    """Estimate one strategy's expected revenue over fresh-log episodes."""
    env = Example1Env()
    design = env.DESIGN.reshape(-1)
    pooled = np.array([env.pooled_rate(0), env.pooled_rate(1)])

    if strategy in ("empirical-average", "causal-inference"):
        clicks = env.sample_log_clicks(rng, episodes)
        chooser = (empirical_average_choice if strategy == "empirical-average"
                   else causal_inference_choice)
        choice = chooser(clicks, design)
        revenue = users * pooled[choice]
    elif strategy == "ab-test":
        n_a = rng.binomial(test_users, 0.5, size=episodes)
        n_b = test_users - n_a
        clicks_a = rng.binomial(n_a, pooled[0])
        clicks_b = rng.binomial(n_b, pooled[1])
        rate_a = np.divide(clicks_a, n_a, out=np.zeros(episodes), where=n_a > 0)
        rate_b = np.divide(clicks_b, n_b, out=np.zeros(episodes), where=n_b > 0)
        winner = (rate_b > rate_a).astype(np.int64)
        revenue = clicks_a + clicks_b + (users - test_users) * pooled[winner]
    elif strategy == "ucb-em":
        clicks = env.sample_log_clicks(rng, episodes)
        revenue = _kernels.example1_ucb_em_episodes(
            clicks, np.ascontiguousarray(design),
            np.ascontiguousarray(env.RATES.reshape(-1)), users, ucb_beta, rng)
    else:
        raise ValueError(f"unknown strategy {strategy!r}; choose from {STRATEGIES}")

    revenue = np.asarray(revenue, dtype=np.float64)
    se = float(revenue.std(ddof=1) / np.sqrt(episodes)) if episodes > 1 else float("nan")
    return Example1Result(strategy, episodes, float(revenue.mean()), se)
