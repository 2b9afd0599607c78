"""Online bandit oracles.

All oracles implement the ``BanditOracle`` contract: ``play`` chooses an
action (advancing only its RNG), ``update`` absorbs one (context, action,
reward) triple deterministically. Ties always break toward the lowest action
index so runs are reproducible.
"""

from __future__ import annotations

import hashlib
import math
from typing import Callable, Optional, Sequence

import numpy as np

from .core import Context, ContractViolation
from .forest import ForestParams, MultiActionForest, train_forest

__all__ = [
    "ABTest",
    "UCB",
    "ThompsonGaussian",
    "ThompsonBernoulli",
    "LinUCB",
    "EpsilonForest",
    "BlockOneHotFeatures",
    "default_linucb_beta",
]


def _digest(*parts) -> bytes:
    h = hashlib.sha256()
    for part in parts:
        if isinstance(part, np.ndarray):
            h.update(np.ascontiguousarray(part).tobytes())
        else:
            h.update(repr(part).encode())
        h.update(b"|")
    return h.digest()


def _candidate_list(n_actions: int, candidates: Sequence[int] | None) -> Sequence[int]:
    if candidates is None:
        return range(n_actions)
    if not len(candidates):
        raise ContractViolation("candidate set must be non-empty")
    return candidates


class _MeanCountOracle:
    """Shared running-mean bookkeeping: ȳ_a and play counts n_a."""

    def __init__(self, n_actions: int):
        if n_actions < 1:
            raise ValueError("n_actions must be >= 1")
        self.n_actions = int(n_actions)
        self.means = np.zeros(n_actions, dtype=np.float64)
        self.counts = np.zeros(n_actions, dtype=np.int64)

    def update(self, context: Context, action: int, reward: float) -> None:
        a = int(action)
        if not 0 <= a < self.n_actions:
            raise ContractViolation(f"action {a} outside [0,{self.n_actions})")
        n = self.counts[a]
        self.means[a] = (n * self.means[a] + reward) / (n + 1)
        self.counts[a] = n + 1

    def state_digest(self) -> bytes:
        return _digest(type(self).__name__, self.means, self.counts)


class ABTest(_MeanCountOracle):
    """Uniform-random assignment; keeps running means for later inspection."""

    def __init__(self, n_actions: int, rng: np.random.Generator):
        super().__init__(n_actions)
        self.rng = rng

    def play(self, context: Context, candidates: Sequence[int] | None = None) -> int:
        cands = _candidate_list(self.n_actions, candidates)
        return int(cands[int(self.rng.random() * len(cands))])


class UCB(_MeanCountOracle):
    """Index policy on ȳ_a + beta * sqrt(2 ln(n) / n_a) with n = Σ n_a.

    Unplayed arms have an infinite index; the lowest-indexed one is chosen
    first, so the first K plays visit every arm exactly once.
    """

    def __init__(self, n_actions: int, beta: float = 1.0):
        super().__init__(n_actions)
        self.beta = float(beta)

    def play(self, context: Context, candidates: Sequence[int] | None = None) -> int:
        cands = _candidate_list(self.n_actions, candidates)
        for a in cands:
            if self.counts[a] == 0:
                return int(a)
        total = float(self.counts[list(cands)].sum()) if candidates is not None \
            else float(self.counts.sum())
        log_term = math.log(total) if total > 0 else 0.0
        best, best_score = None, -math.inf
        for a in cands:
            score = self.means[a] + self.beta * math.sqrt(2.0 * log_term / self.counts[a])
            if score > best_score:
                best, best_score = a, score
        return int(best)


class ThompsonGaussian(_MeanCountOracle):
    """Thompson sampling with Gaussian posterior N(ȳ_a, beta^2 / (n_a + 1))."""

    def __init__(self, n_actions: int, rng: np.random.Generator, beta: float = 1.0):
        super().__init__(n_actions)
        if not beta > 0:
            raise ValueError("beta must be positive")
        self.rng = rng
        self.beta = float(beta)

    def play(self, context: Context, candidates: Sequence[int] | None = None) -> int:
        cands = _candidate_list(self.n_actions, candidates)
        best, best_draw = None, -math.inf
        for a in cands:
            sd = self.beta / math.sqrt(self.counts[a] + 1.0)
            draw = self.rng.normal(self.means[a], sd)
            if draw > best_draw:
                best, best_draw = a, draw
        return int(best)


class ThompsonBernoulli:
    """Thompson sampling with Beta(s_a, f_a) posteriors and a (1,1) prior."""

    def __init__(self, n_actions: int, rng: np.random.Generator):
        if n_actions < 1:
            raise ValueError("n_actions must be >= 1")
        self.n_actions = int(n_actions)
        self.rng = rng
        self.successes = np.ones(n_actions, dtype=np.int64)
        self.failures = np.ones(n_actions, dtype=np.int64)

    def play(self, context: Context, candidates: Sequence[int] | None = None) -> int:
        cands = _candidate_list(self.n_actions, candidates)
        best, best_draw = None, -math.inf
        for a in cands:
            draw = self.rng.beta(self.successes[a], self.failures[a])
            if draw > best_draw:
                best, best_draw = a, draw
        return int(best)

    def update(self, context: Context, action: int, reward: float) -> None:
        a = int(action)
        if not 0 <= a < self.n_actions:
            raise ContractViolation(f"action {a} outside [0,{self.n_actions})")
        if reward == 1.0:
            self.successes[a] += 1
        elif reward == 0.0:
            self.failures[a] += 1
        else:
            raise ValueError(f"Bernoulli oracle requires rewards in {{0,1}}, got {reward}")

    def state_digest(self) -> bytes:
        return _digest("ThompsonBernoulli", self.successes, self.failures)


class BlockOneHotFeatures:
    """phi(x, a): a K*(d+1) vector with (x, 1) placed in block a.

    Realizes independent per-action linear models y = x . theta_a + b_a under
    a single shared parameter vector.
    """

    def __init__(self, context_dim: int, n_actions: int):
        self.context_dim = int(context_dim)
        self.n_actions = int(n_actions)
        self.dim = self.n_actions * (self.context_dim + 1)

    def __call__(self, context: Context, action: int) -> np.ndarray:
        phi = np.zeros(self.dim, dtype=np.float64)
        base = int(action) * (self.context_dim + 1)
        phi[base:base + self.context_dim] = context
        phi[base + self.context_dim] = 1.0
        return phi


def default_linucb_beta(dim: int) -> Callable[[int], float]:
    """Confidence-width schedule sqrt(2 d' (1 + 2 ln max(t, 2)))."""

    def beta(t: int) -> float:
        return math.sqrt(2.0 * dim * (1.0 + 2.0 * math.log(max(t, 2))))

    return beta


class LinUCB:
    """Ridge-style linear UCB on a shared feature map phi(x, a).

    Maintains V = I + sum phi phi^T and b = sum y phi; plays the argmax of
    theta_hat . phi + beta_t * sqrt(phi^T V^-1 phi) with theta_hat = V^-1 b.
    The inverse is tracked by rank-one updates and refreshed periodically to
    keep it within 1e-9 of a dense solve.
    """

    _REFRESH_EVERY = 64

    def __init__(self, n_actions: int, feature_map, dim: Optional[int] = None,
                 beta: float | Callable[[int], float] | None = None):
        self.n_actions = int(n_actions)
        self.feature_map = feature_map
        self.dim = int(dim if dim is not None else feature_map.dim)
        self.V = np.eye(self.dim)
        self.V_inv = np.eye(self.dim)
        self.b = np.zeros(self.dim)
        self.t = 1
        if beta is None:
            beta = default_linucb_beta(self.dim)
        self._beta = beta
        self._updates_since_refresh = 0

    def beta_t(self) -> float:
        return self._beta(self.t) if callable(self._beta) else float(self._beta)

    def play(self, context: Context, candidates: Sequence[int] | None = None) -> int:
        cands = _candidate_list(self.n_actions, candidates)
        theta = self.V_inv @ self.b
        beta_t = self.beta_t()
        best, best_score = None, -math.inf
        for a in cands:
            phi = self.feature_map(context, a)
            width_sq = float(phi @ self.V_inv @ phi)
            score = float(theta @ phi) + beta_t * math.sqrt(max(width_sq, 0.0))
            if not math.isfinite(score):
                raise ArithmeticError("non-finite LinUCB score: conditioning failure")
            if score > best_score:
                best, best_score = a, score
        return int(best)

    def update(self, context: Context, action: int, reward: float) -> None:
        phi = self.feature_map(context, int(action))
        self.V += np.outer(phi, phi)
        self.b += reward * phi
        self.t += 1
        # Sherman-Morrison rank-one downdate of the inverse.
        Vphi = self.V_inv @ phi
        denom = 1.0 + float(phi @ Vphi)
        self.V_inv -= np.outer(Vphi, Vphi) / denom
        self._updates_since_refresh += 1
        if self._updates_since_refresh >= self._REFRESH_EVERY:
            self.V_inv = np.linalg.inv(self.V)
            self._updates_since_refresh = 0

    def state_digest(self) -> bytes:
        return _digest("LinUCB", self.V, self.b, self.t)


class EpsilonForest:
    """Epsilon-decreasing multi-action forest oracle.

    Plays the forest's per-action estimate argmax with probability 1 - eps(t)
    and a uniform action otherwise; accumulates feedback and retrains the
    forest every ``retrain_every`` updates. Before the first training the
    policy is uniform-random.
    """

    def __init__(self, n_actions: int, rng: np.random.Generator,
                 epsilon: Callable[[int], float],
                 params: ForestParams | None = None,
                 retrain_every: int = 50,
                 retrain_seed: np.random.SeedSequence | int = 0):
        if retrain_every < 1:
            raise ValueError("retrain_every must be >= 1")
        self.n_actions = int(n_actions)
        self.rng = rng
        self.epsilon = epsilon
        self.params = params if params is not None else ForestParams(n_actions=n_actions)
        self.retrain_every = int(retrain_every)
        self._retrain_seq = (retrain_seed if isinstance(retrain_seed, np.random.SeedSequence)
                             else np.random.SeedSequence(retrain_seed))
        self.forest: MultiActionForest | None = None
        self.data_x: list[Context] = []
        self.data_a: list[int] = []
        self.data_y: list[float] = []
        self.t = 1

    @property
    def n_samples(self) -> int:
        return len(self.data_y)

    def play(self, context: Context, candidates: Sequence[int] | None = None) -> int:
        cands = _candidate_list(self.n_actions, candidates)
        eps = float(self.epsilon(self.t))
        explore = self.rng.random() < eps
        if explore or self.forest is None:
            return int(cands[int(self.rng.random() * len(cands))])
        best, best_est = None, -math.inf
        for a in cands:
            est = self.forest.predict(context, a)
            if est > best_est:
                best, best_est = a, est
        return int(best)

    def update(self, context: Context, action: int, reward: float) -> None:
        self.data_x.append(np.asarray(context, dtype=np.float64))
        self.data_a.append(int(action))
        self.data_y.append(float(reward))
        self.t += 1
        if len(self.data_y) % self.retrain_every == 0:
            self._retrain()

    def _retrain(self) -> None:
        rng = np.random.Generator(np.random.PCG64(self._retrain_seq.spawn(1)[0]))
        self.forest = train_forest(
            np.asarray(self.data_x), np.asarray(self.data_a, dtype=np.int64),
            np.asarray(self.data_y), self.params, rng)

    def state_digest(self) -> bytes:
        forest_part = self.forest.dump() if self.forest is not None else "untrained"
        return _digest("EpsilonForest", np.asarray(self.data_a, dtype=np.int64),
                       np.asarray(self.data_y), self.t, forest_part)
