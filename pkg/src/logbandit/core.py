"""Domain types, the indexed logged dataset, and component contracts.

Everything downstream plugs into the two small contracts defined here:
``BanditOracle`` (online learner with ``play``/``update``) and
``OfflineEvaluator`` (synthesizes outcomes from logged data via
``get_outcome``, returning ``None`` when it cannot).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Protocol, Sequence, runtime_checkable

import numpy as np

__all__ = [
    "Context",
    "LoggedRecord",
    "LoggedDataset",
    "BanditOracle",
    "OfflineEvaluator",
    "IdPool",
    "ContractViolation",
    "DataError",
    "as_context",
    "context_key",
    "index_exact",
    "sample_and_remove",
    "spawn_generators",
]

# A context is a 1-d float64 vector. Exact-match semantics are bitwise, so
# discrete environments must emit canonical float encodings.
Context = np.ndarray


class ContractViolation(RuntimeError):
    """A component was driven outside its documented preconditions."""


class DataError(ValueError):
    """Logged data is malformed or missing required fields."""


def as_context(values: Sequence[float] | np.ndarray) -> Context:
    """Coerce to the canonical context representation (1-d float64 array)."""
    x = np.asarray(values, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError(f"context must be a 1-d vector, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("context entries must be finite")
    return x


def context_key(context: Context) -> bytes:
    """Hashable key under bitwise equality of the stored float values."""
    return np.ascontiguousarray(context, dtype=np.float64).tobytes()


def spawn_generators(seed, n: int) -> list[np.random.Generator]:
    """Split one root seed into ``n`` independent, reproducible streams."""
    root = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.PCG64(s)) for s in root.spawn(n)]


@dataclass(frozen=True)
class LoggedRecord:
    """One observational row: (action, context, outcome) plus propensities.

    ``propensity_chosen`` is the logging probability of the recorded action;
    ``propensity_vector`` holds the probabilities of the first K-1 actions.
    Either may be absent; evaluators that need them validate at init.
    """

    id: int
    action: int
    context: Context
    outcome: float
    propensity_chosen: Optional[float] = None
    propensity_vector: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.propensity_chosen is not None and not self.propensity_chosen > 0.0:
            raise DataError(f"record {self.id}: propensity_chosen must be > 0")
        if self.propensity_vector is not None:
            p = np.asarray(self.propensity_vector, dtype=np.float64)
            if np.any(p < 0.0) or np.any(p > 1.0) or p.sum() > 1.0 + 1e-9:
                raise DataError(f"record {self.id}: propensity_vector must lie in [0,1] "
                                "with entries summing to at most 1")


class IdPool:
    """Set of integer ids supporting O(1) uniform sampling and removal.

    Backed by a list plus a position map; removal swap-pops. Iteration order
    is deterministic given the construction/removal history, which keeps
    uniform draws reproducible under a fixed seed.
    """

    __slots__ = ("_items", "_pos")

    def __init__(self, ids: Iterable[int] = ()):
        self._items: list[int] = list(ids)
        self._pos: dict[int, int] = {v: i for i, v in enumerate(self._items)}
        if len(self._pos) != len(self._items):
            raise ValueError("duplicate ids in pool")

    def __len__(self) -> int:
        return len(self._items)

    def __contains__(self, id_: int) -> bool:
        return id_ in self._pos

    def __iter__(self):
        return iter(self._items)

    def add(self, id_: int) -> None:
        if id_ in self._pos:
            raise ValueError(f"id {id_} already present")
        self._pos[id_] = len(self._items)
        self._items.append(id_)

    def discard(self, id_: int) -> bool:
        pos = self._pos.pop(id_, None)
        if pos is None:
            return False
        last = self._items.pop()
        if last != id_:
            self._items[pos] = last
            self._pos[last] = pos
        return True

    def sample(self, rng: np.random.Generator) -> int:
        """Uniform draw without removal (single next_double consumed)."""
        if not self._items:
            raise ContractViolation("cannot sample from an empty pool")
        return self._items[int(rng.random() * len(self._items))]


class LoggedDataset:
    """Indexed, deletable storage for logged records.

    Deletion is permanent: a deleted id is never returned by any query again.
    An exact-match index keyed on (bitwise context, action) is built lazily
    and maintained across deletions, making repeated exact matching O(1)
    amortized per call.
    """

    def __init__(self, records: Iterable[LoggedRecord], n_actions: int,
                 context_dim: int, reward_range: tuple[float, float] = (0.0, 1.0)):
        if n_actions < 1 or context_dim < 1:
            raise ValueError("n_actions and context_dim must be positive")
        lo, hi = reward_range
        if not lo < hi:
            raise ValueError("reward_range must satisfy lo < hi")
        self.n_actions = int(n_actions)
        self.context_dim = int(context_dim)
        self.reward_range = (float(lo), float(hi))
        self._records: dict[int, LoggedRecord] = {}
        self._exact_index: dict[tuple[bytes, int], IdPool] | None = None
        self._action_index: dict[int, IdPool] | None = None
        for rec in records:
            if rec.id in self._records:
                raise DataError(f"duplicate record id {rec.id}")
            if not 0 <= rec.action < n_actions:
                raise DataError(f"record {rec.id}: action {rec.action} outside [0,{n_actions})")
            if rec.context.shape != (context_dim,):
                raise DataError(f"record {rec.id}: context has dimension "
                                f"{rec.context.shape[0]}, expected {context_dim}")
            self._records[rec.id] = rec

    def __len__(self) -> int:
        return len(self._records)

    def __contains__(self, id_: int) -> bool:
        return id_ in self._records

    def record(self, id_: int) -> LoggedRecord:
        return self._records[id_]

    def records(self) -> Iterable[LoggedRecord]:
        """Live records in insertion order."""
        return self._records.values()

    def ids(self) -> list[int]:
        return list(self._records.keys())

    # -- indices ----------------------------------------------------------

    def _ensure_exact_index(self) -> dict[tuple[bytes, int], IdPool]:
        if self._exact_index is None:
            index: dict[tuple[bytes, int], IdPool] = {}
            for rec in self._records.values():
                key = (context_key(rec.context), rec.action)
                index.setdefault(key, IdPool()).add(rec.id)
            self._exact_index = index
        return self._exact_index

    def _ensure_action_index(self) -> dict[int, IdPool]:
        if self._action_index is None:
            index: dict[int, IdPool] = {}
            for rec in self._records.values():
                index.setdefault(rec.action, IdPool()).add(rec.id)
            self._action_index = index
        return self._action_index

    def exact_pool(self, context: Context, action: int) -> IdPool | None:
        """Pool of live ids matching (context, action) bitwise, or None."""
        return self._ensure_exact_index().get((context_key(context), int(action)))

    def action_pool(self, action: int) -> IdPool | None:
        return self._ensure_action_index().get(int(action))

    # -- mutation ---------------------------------------------------------

    def delete(self, id_: int) -> LoggedRecord:
        """Remove a record permanently, maintaining all built indices."""
        rec = self._records.pop(id_, None)
        if rec is None:
            raise ContractViolation(f"record {id_} is not alive")
        if self._exact_index is not None:
            key = (context_key(rec.context), rec.action)
            pool = self._exact_index.get(key)
            if pool is not None:
                pool.discard(id_)
                if not len(pool):
                    del self._exact_index[key]
        if self._action_index is not None:
            pool = self._action_index.get(rec.action)
            if pool is not None:
                pool.discard(id_)
        return rec


def index_exact(dataset: LoggedDataset, context: Context, action: int) -> set[int]:
    """Ids of live records with bitwise-equal context and the same action."""
    pool = dataset.exact_pool(context, action)
    return set(pool) if pool is not None else set()


def sample_and_remove(dataset: LoggedDataset, ids, rng: np.random.Generator) -> LoggedRecord:
    """Pick one id uniformly from ``ids``, delete it, and return the record.

    ``ids`` may be any iterable of live ids. When given an ``IdPool`` the
    pool's own order is used (O(1)); otherwise ids are sorted first so the
    draw is reproducible regardless of set iteration order.
    """
    if isinstance(ids, IdPool):
        if not len(ids):
            raise ContractViolation("sample_and_remove: empty id set")
        chosen = ids.sample(rng)
    else:
        ordered = sorted(ids)
        if not ordered:
            raise ContractViolation("sample_and_remove: empty id set")
        chosen = ordered[int(rng.random() * len(ordered))]
    if chosen not in dataset:
        raise ContractViolation(f"sample_and_remove: id {chosen} is not alive")
    return dataset.delete(chosen)


@runtime_checkable
class BanditOracle(Protocol):
    """Online bandit learner.

    ``play`` must not mutate learned state (its RNG may advance);
    ``update`` is the only mutator and must be deterministic given state and
    arguments, so that replaying an identical (x, a, y) sequence into a fresh
    oracle reproduces the state bit for bit.
    """

    n_actions: int

    def play(self, context: Context, candidates: Sequence[int] | None = None) -> int:
        """Choose an action; ``candidates`` optionally restricts the argmax."""
        ...

    def update(self, context: Context, action: int, reward: float) -> None:
        ...

    def state_digest(self) -> bytes:
        """Stable digest of the learned state (excludes RNG position)."""
        ...


@runtime_checkable
class OfflineEvaluator(Protocol):
    """Synthesizes outcomes from logged data; ``None`` encodes NULL.

    Once an evaluator has permanently exhausted an action per its own rule,
    every later call for that action returns ``None``.
    """

    def get_outcome(self, context: Context, action: int) -> Optional[float]:
        ...
