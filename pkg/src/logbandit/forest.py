"""Multi-action regression forest: honest, alpha-regular trees.

Each tree partitions the context space with axis-aligned splits and stores,
per leaf, per-action outcome sums and counts. Split placement maximizes
pooled-response variance reduction on the split-placement (J) half of a
subsample, subject to every split keeping at least an ``alpha`` fraction of
the J rows on each side and at least ``min_action_count`` estimation (I) rows
of every action in each child. With honesty enabled the I responses never
influence structure, only leaf values.

The hot tree-construction and traversal loops run in the selected kernel
backend (compiled or pure Python; see ``logbandit._kernels``).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels

__all__ = [
    "ForestParams",
    "ScheduleConstants",
    "Tree",
    "MultiActionForest",
    "train_forest",
    "epsilon_schedule",
    "audit_regularity",
]


@dataclass(frozen=True)
class ScheduleConstants:
    """Constants of the decreasing exploration schedule eps_t = t**(-exponent).

    ``A`` aggregates the split-randomization floor pi_prime, the context
    dimension and the regularity level; ``beta`` doubles as the default
    subsample-size exponent; ``exponent`` equals (1 - beta) / 2.
    """

    A: float
    beta: float
    exponent: float

    @classmethod
    def from_params(cls, alpha: float, d: int, pi_prime: float) -> "ScheduleConstants":
        if not 0.0 < alpha <= 0.5:
            raise ValueError("alpha must lie in (0, 0.5]")
        if d < 1:
            raise ValueError("d must be >= 1")
        if not 0.0 < pi_prime <= 1.0:
            raise ValueError("pi_prime must lie in (0, 1]")
        A = (pi_prime / d) * math.log(1.0 / (1.0 - alpha)) / math.log(1.0 / alpha)
        beta = 1.0 - 2.0 * A / (2.0 + 3.0 * A)
        return cls(A=A, beta=beta, exponent=(1.0 - beta) / 2.0)


def epsilon_schedule(t: int, alpha: float, d: int, pi_prime: float) -> float:
    """Exploration probability t**(-(1-beta)/2) at time slot ``t``."""
    if t < 1:
        raise ValueError("t must be >= 1")
    consts = ScheduleConstants.from_params(alpha, d, pi_prime)
    return float(t) ** (-consts.exponent)


@dataclass(frozen=True)
class ForestParams:
    """Forest hyperparameters; defaults follow the regularity analysis.

    ``subsample_exponent=None`` uses the schedule beta derived from
    (alpha, d, pi_prime) at training time; ``mtry=None`` scans ceil(sqrt(d))
    random features per node.
    """

    n_actions: int
    n_trees: int = 100
    alpha: float = 0.2
    min_action_count: int = 5
    subsample_exponent: Optional[float] = None
    honest: bool = True
    mtry: Optional[int] = None
    pi_prime: float = 1.0
    reward_range: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if self.n_actions < 1:
            raise ValueError("n_actions must be >= 1")
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if not 0.0 < self.alpha <= 0.5:
            raise ValueError("alpha must lie in (0, 0.5]")
        if self.min_action_count < 1:
            raise ValueError("min_action_count must be >= 1")
        if self.subsample_exponent is not None and not 0.0 < self.subsample_exponent <= 1.0:
            raise ValueError("subsample_exponent must lie in (0, 1]")


class Tree:
    """One trained tree: flat node arrays plus its subsample bookkeeping.

    ``j_rows``/``i_rows`` are absolute training-row indices permuted so that
    each node's rows occupy [start, end) ranges.
    """

    def __init__(self, arrays, j_rows: np.ndarray, i_rows: np.ndarray):
        (self.feature, self.threshold, self.left, self.right,
         self.start_j, self.end_j, self.start_i, self.end_i,
         self.underfilled, idx_j, idx_i, self.leaf_sum, self.leaf_cnt) = arrays
        self.j_rows = j_rows[idx_j]
        self.i_rows = i_rows[idx_i]

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def leaf_for(self, context: np.ndarray) -> int:
        return _kernels.walk_leaf(self.feature, self.threshold, self.left,
                                  self.right, np.asarray(context, dtype=np.float64))

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf node index for every row of ``X``."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _kernels.tree_apply(self.feature, self.threshold, self.left,
                                   self.right, X)

    def leaf_estimate(self, context: np.ndarray, action: int) -> Optional[float]:
        """Mean I-sample outcome of ``action`` in the leaf holding ``context``.

        ``None`` when the leaf holds no estimation rows for that action.
        """
        node = self.leaf_for(context)
        c = self.leaf_cnt[node, action]
        if c == 0:
            return None
        return float(self.leaf_sum[node, action] / c)

    def depths(self) -> np.ndarray:
        depth = np.zeros(self.n_nodes, dtype=np.int32)
        for node in range(self.n_nodes):
            if self.feature[node] >= 0:
                depth[self.left[node]] = depth[node] + 1
                depth[self.right[node]] = depth[node] + 1
        return depth

    def dump(self) -> str:
        """Deterministic text form: one line per node."""
        depth = self.depths()
        lines = []
        for node in range(self.n_nodes):
            if self.feature[node] >= 0:
                lines.append(f"{depth[node]} split f={self.feature[node]} "
                             f"t={self.threshold[node]!r}")
            else:
                counts = ",".join(str(int(c)) for c in self.leaf_cnt[node])
                lines.append(f"{depth[node]} leaf n=[{counts}]")
        return "\n".join(lines)


class MultiActionForest:
    """Bag of trees over a shared training snapshot.

    ``predict`` averages per-tree leaf estimates over the trees that have
    data for the queried action, falling back to the global per-action
    training mean (or the reward-range midpoint when the action was never
    observed at all).
    """

    def __init__(self, trees: list[Tree], params: ForestParams,
                 X: np.ndarray, actions: np.ndarray, y: np.ndarray,
                 record_ids: Optional[np.ndarray] = None):
        self.trees = trees
        self.params = params
        self.X = X
        self.actions = actions
        self.y = y
        self.record_ids = record_ids
        K = params.n_actions
        self.global_sum = np.zeros(K)
        self.global_cnt = np.zeros(K, dtype=np.int64)
        np.add.at(self.global_sum, actions, y)
        np.add.at(self.global_cnt, actions, 1)
        self._packed = self._pack()
        self._assignments: list[np.ndarray] | None = None

    def _pack(self):
        offsets = np.zeros(len(self.trees) + 1, dtype=np.int64)
        for b, tree in enumerate(self.trees):
            offsets[b + 1] = offsets[b] + tree.n_nodes
        feature = np.concatenate([t.feature for t in self.trees])
        threshold = np.concatenate([t.threshold for t in self.trees])
        left = np.concatenate([t.left for t in self.trees])
        right = np.concatenate([t.right for t in self.trees])
        leaf_sum = np.concatenate([t.leaf_sum for t in self.trees], axis=0)
        leaf_cnt = np.concatenate([t.leaf_cnt for t in self.trees], axis=0)
        return (feature, threshold, left, right, leaf_sum, leaf_cnt, offsets)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def _fallback(self, action: int) -> float:
        if self.global_cnt[action] > 0:
            return float(self.global_sum[action] / self.global_cnt[action])
        lo, hi = self.params.reward_range
        return 0.5 * (lo + hi)

    def predict_all(self, context: np.ndarray) -> np.ndarray:
        """Estimated outcome of every action at ``context``."""
        x = np.asarray(context, dtype=np.float64)
        ratio_sum, present = _kernels.forest_accumulate(
            self._packed, x, self.params.n_actions)
        out = np.empty(self.params.n_actions)
        for a in range(self.params.n_actions):
            out[a] = ratio_sum[a] / present[a] if present[a] > 0 else self._fallback(a)
        return out

    def predict(self, context: np.ndarray, action: int) -> float:
        x = np.asarray(context, dtype=np.float64)
        ratio_sum, present = _kernels.forest_accumulate(
            self._packed, x, self.params.n_actions)
        a = int(action)
        return float(ratio_sum[a] / present[a]) if present[a] > 0 else self._fallback(a)

    def assignments(self) -> list[np.ndarray]:
        """Per-tree leaf node of every training row (cached)."""
        if self._assignments is None:
            self._assignments = [t.apply(self.X) for t in self.trees]
        return self._assignments

    def leaf_members(self, tree_index: int, context: np.ndarray, action: int,
                     dataset) -> set[int]:
        """Live logged-record ids sharing the leaf and action under one tree.

        Requires the forest to have been trained with ``record_ids``.
        """
        if self.record_ids is None:
            raise ValueError("forest was not trained on logged records")
        tree = self.trees[tree_index]
        leaf = tree.leaf_for(np.asarray(context, dtype=np.float64))
        assigned = self.assignments()[tree_index]
        mask = (assigned == leaf) & (self.actions == action)
        return {int(rid) for rid in self.record_ids[mask] if rid in dataset}

    def dump(self) -> str:
        parts = [f"forest trees={self.n_trees} actions={self.params.n_actions}"]
        for b, tree in enumerate(self.trees):
            parts.append(f"tree {b}")
            parts.append(tree.dump())
        return "\n".join(parts)

    def structure_digest(self) -> str:
        """Digest of split placement only (features and thresholds)."""
        h = hashlib.sha256()
        for tree in self.trees:
            h.update(tree.feature.tobytes())
            h.update(tree.threshold.tobytes())
            h.update(tree.left.tobytes())
            h.update(tree.right.tobytes())
        return h.hexdigest()


def train_forest(X: np.ndarray, actions: np.ndarray, y: np.ndarray,
                 params: ForestParams, rng: np.random.Generator,
                 record_ids: Optional[np.ndarray] = None) -> MultiActionForest:
    """Grow ``params.n_trees`` trees on uniform subsamples of the data.

    Subsamples have size ceil(n ** subsample_exponent). With honesty on, the
    first ceil(s/2) rows of each shuffled subsample become the estimation (I)
    half and the rest the split-placement (J) half; with honesty off the full
    subsample plays both roles.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    actions = np.asarray(actions, dtype=np.int64)
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    if n == 0:
        raise ValueError("training data must be non-empty")
    if X.ndim != 2:
        raise ValueError("X must be 2-d")
    if actions.min() < 0 or actions.max() >= params.n_actions:
        raise ValueError("actions outside [0, n_actions)")
    d = X.shape[1]
    exponent = params.subsample_exponent
    if exponent is None:
        exponent = ScheduleConstants.from_params(params.alpha, d, params.pi_prime).beta
    s = min(n, max(1, math.ceil(n ** exponent)))
    mtry = params.mtry if params.mtry is not None else math.ceil(math.sqrt(d))
    mtry = max(1, min(mtry, d))

    trees = []
    for _ in range(params.n_trees):
        perm = rng.permutation(n)
        sub = perm[:s]
        if params.honest:
            n_i = math.ceil(s / 2)
            i_rows, j_rows = sub[:n_i], sub[n_i:]
        else:
            i_rows = j_rows = sub
        arrays = _kernels.build_tree(
            np.ascontiguousarray(X[j_rows]), np.ascontiguousarray(y[j_rows]),
            np.ascontiguousarray(X[i_rows]),
            np.ascontiguousarray(actions[i_rows], dtype=np.int32),
            np.ascontiguousarray(y[i_rows]),
            params.n_actions, params.alpha, params.min_action_count, mtry, rng)
        trees.append(Tree(arrays, j_rows, i_rows))

    ids = None if record_ids is None else np.asarray(record_ids, dtype=np.int64)
    return MultiActionForest(trees, params, X, actions, y, record_ids=ids)


@dataclass
class RegularityReport:
    """Outcome of auditing a trained forest against its growth constraints."""

    n_internal: int = 0
    n_leaves: int = 0
    alpha_violations: list = field(default_factory=list)
    action_violations: list = field(default_factory=list)
    flag_violations: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (self.alpha_violations or self.action_violations
                    or self.flag_violations)


def audit_regularity(forest: MultiActionForest) -> RegularityReport:
    """Re-check every node against the split constraints.

    Internal nodes: both children keep >= alpha * (node J size) J rows and
    >= min_action_count I rows of every action. Leaves: every action has at
    least min_action_count I rows, or the node carries the underfilled flag
    recorded when no legal split existed.
    """
    params = forest.params
    report = RegularityReport()
    for b, tree in enumerate(forest.trees):
        for node in range(tree.n_nodes):
            if tree.feature[node] >= 0:
                report.n_internal += 1
                nj = tree.end_j[node] - tree.start_j[node]
                lo_j = min(tree.end_j[tree.left[node]] - tree.start_j[tree.left[node]],
                           tree.end_j[tree.right[node]] - tree.start_j[tree.right[node]])
                if lo_j < params.alpha * nj:
                    report.alpha_violations.append((b, node))
                for child in (tree.left[node], tree.right[node]):
                    rows = tree.i_rows[tree.start_i[child]:tree.end_i[child]]
                    counts = np.bincount(forest.actions[rows],
                                         minlength=params.n_actions)
                    if counts.min() < params.min_action_count:
                        report.action_violations.append((b, node, int(child)))
            else:
                report.n_leaves += 1
                under = tree.leaf_cnt[node].min() < params.min_action_count
                if bool(under) != bool(tree.underfilled[node]):
                    report.flag_violations.append((b, node))
    return report
