"""Interleaved virtual/online play and its batch variant.

Each round has an offline phase and an online phase. In the offline phase a
context is generated, the oracle picks an action (a "virtual play"), and the
offline evaluator tries to synthesize an outcome; on success the oracle is
updated and the loop repeats, on the first failure the round falls through to
one real online interaction. The batch variant consumes the evaluator fully
before any online round, sweeping actions in order instead of asking the
oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import Context, LoggedDataset
from .evaluators import NullEvaluator

__all__ = [
    "RoundEntry",
    "VirtualPlay",
    "RunTrace",
    "TrueContextSampler",
    "EmpiricalContextPool",
    "empirical_context_pool",
    "RunawayEvaluatorError",
    "run",
    "run_batch",
]


class RunawayEvaluatorError(RuntimeError):
    """An evaluator produced more outcomes in one round than the safety cap."""


@dataclass
class VirtualPlay:
    t: int
    context: Context
    action: int
    reward: float
    instant_regret: Optional[float]


@dataclass
class RoundEntry:
    t: int
    context: Context
    action: int
    reward: float
    virtual_plays: int
    instant_regret: Optional[float]
    cumulative_regret: Optional[float]


@dataclass
class RunTrace:
    """Per-round records plus the flat list of virtual plays."""

    rounds: list[RoundEntry] = field(default_factory=list)
    virtual: list[VirtualPlay] = field(default_factory=list)
    contextual: bool = False

    @property
    def T(self) -> int:
        return len(self.rounds)

    @property
    def n_virtual(self) -> int:
        return len(self.virtual)

    def final_regret(self) -> float:
        if not self.rounds or self.rounds[-1].cumulative_regret is None:
            raise ValueError("trace carries no regret information")
        return self.rounds[-1].cumulative_regret

    def regret_curve(self) -> np.ndarray:
        return np.array([e.cumulative_regret for e in self.rounds], dtype=np.float64)

    def online_regret(self) -> float:
        return sum(e.instant_regret for e in self.rounds)

    def virtual_regret(self) -> float:
        return sum(v.instant_regret for v in self.virtual)


class TrueContextSampler:
    """Draw contexts from the environment's true distribution."""

    def __init__(self, environment, rng: np.random.Generator):
        self.environment = environment
        self.rng = rng

    def __call__(self) -> Context:
        return self.environment.sample_context(self.rng)

    def observe(self, context: Context) -> None:
        pass


class EmpiricalContextPool:
    """Resample uniformly from observed contexts; grows with online traffic."""

    def __init__(self, contexts: Sequence[Context], rng: np.random.Generator):
        self.pool = [np.asarray(x, dtype=np.float64) for x in contexts]
        if not self.pool:
            raise ValueError("empirical context pool requires at least one context")
        self.rng = rng

    def __call__(self) -> Context:
        return self.pool[int(self.rng.random() * len(self.pool))]

    def observe(self, context: Context) -> None:
        self.pool.append(np.asarray(context, dtype=np.float64))


def empirical_context_pool(logged: LoggedDataset, rng: np.random.Generator) -> EmpiricalContextPool:
    """Pool initialized with the logged contexts."""
    return EmpiricalContextPool([rec.context for rec in logged.records()], rng)


def _instant_regret(environment, context: Context, action: int,
                    contextual: bool) -> Optional[float]:
    if not getattr(environment, "has_true_means", False):
        return None
    if contextual:
        means = [environment.conditional_mean(context, a)
                 for a in range(environment.n_actions)]
    else:
        means = [environment.marginal_mean(a) for a in range(environment.n_actions)]
    return max(means) - means[action]


def _virtual_cap(evaluator, n_actions: int, cap: Optional[int]) -> int:
    if cap is not None:
        return cap
    dataset = getattr(evaluator, "dataset", None)
    if dataset is not None:
        hint = len(dataset)
    elif hasattr(evaluator, "budgets"):
        hint = int(np.ceil(evaluator.budgets).sum())
    else:
        hint = 1000
    return 10 * hint + n_actions


def run(oracle, evaluator, ctxgen, environment, T: int, rng: np.random.Generator,
        contextual: bool = False, max_virtual_per_round: Optional[int] = None) -> RunTrace:
    """Interleaved offline/online execution for ``T`` rounds.

    ``rng`` is the environment stream: it is consumed only by online context
    and reward draws, never during offline phases. With the null evaluator
    the offline phase is skipped outright, so the run is the bare online
    oracle; with any other evaluator each round performs virtual plays until
    the first failed synthesis (even if other actions still have data).
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    trace = RunTrace(contextual=contextual)
    null = isinstance(evaluator, NullEvaluator)
    cap = _virtual_cap(evaluator, oracle.n_actions, max_virtual_per_round)
    cum = 0.0
    have_regret = getattr(environment, "has_true_means", False)
    for t in range(1, T + 1):
        virtual = 0
        if not null:
            while True:
                x = ctxgen()
                a = oracle.play(x)
                y = evaluator.get_outcome(x, a)
                if y is None:
                    break
                oracle.update(x, a, y)
                virtual += 1
                if virtual > cap:
                    raise RunawayEvaluatorError(
                        f"evaluator produced more than {cap} outcomes in round {t}")
                trace.virtual.append(VirtualPlay(
                    t, x, a, y, _instant_regret(environment, x, a, contextual)))
        x_t = environment.sample_context(rng)
        a_t = oracle.play(x_t)
        y_t = environment.sample_reward(x_t, a_t, rng)
        oracle.update(x_t, a_t, y_t)
        ctxgen.observe(x_t)
        r_t = _instant_regret(environment, x_t, a_t, contextual)
        if have_regret:
            cum += r_t
        trace.rounds.append(RoundEntry(t, x_t, a_t, y_t, virtual, r_t,
                                       cum if have_regret else None))
    return trace


def run_batch(oracle, evaluator, ctxgen, environment, T: int, rng: np.random.Generator,
              contextual: bool = False, max_virtual_per_round: Optional[int] = None) -> RunTrace:
    """Batch variant: exhaust the evaluator action by action, then go online.

    The offline phase sweeps each action in index order with fixed queries
    (the oracle does not choose), updating the oracle on every synthesized
    outcome; the ``T`` online rounds never touch the evaluator.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    trace = RunTrace(contextual=contextual)
    cap = _virtual_cap(evaluator, oracle.n_actions, max_virtual_per_round)
    if not isinstance(evaluator, NullEvaluator):
        for a in range(oracle.n_actions):
            consumed = 0
            while True:
                x = ctxgen()
                y = evaluator.get_outcome(x, a)
                if y is None:
                    break
                oracle.update(x, a, y)
                consumed += 1
                if consumed > cap:
                    raise RunawayEvaluatorError(
                        f"evaluator produced more than {cap} outcomes for action {a}")
                trace.virtual.append(VirtualPlay(
                    0, x, a, y, _instant_regret(environment, x, a, contextual)))
    cum = 0.0
    have_regret = getattr(environment, "has_true_means", False)
    for t in range(1, T + 1):
        x_t = environment.sample_context(rng)
        a_t = oracle.play(x_t)
        y_t = environment.sample_reward(x_t, a_t, rng)
        oracle.update(x_t, a_t, y_t)
        ctxgen.observe(x_t)
        r_t = _instant_regret(environment, x_t, a_t, contextual)
        if have_regret:
            cum += r_t
        trace.rounds.append(RoundEntry(t, x_t, a_t, y_t, 0, r_t,
                                       cum if have_regret else None))
    return trace
