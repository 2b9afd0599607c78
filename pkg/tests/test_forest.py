"""Forest growth constraints, leaf estimates, and the exploration schedule."""

import math

import mpmath
import numpy as np
import pytest

import logbandit._kernels as kernels
from logbandit._kernels import _pure
from logbandit.forest import (ForestParams, MultiActionForest, ScheduleConstants,
                              Tree, audit_regularity, epsilon_schedule, train_forest)


def rng(seed=0):
    return np.random.default_rng(seed)


def train_simple(n=200, d=2, K=2, seed=5, **kwargs):
    g = rng(seed)
    X = g.uniform(-1, 1, (n, d))
    a = g.integers(0, K, n)
    y = np.where(X[:, 0] > 0, 1.0, 0.0) + 0.1 * a
    params = ForestParams(n_actions=K, **kwargs)
    return X, a, y, train_forest(X, a, y, params, rng(seed + 1))


class TestSchedule:
    def test_t1_is_one(self):
        for alpha, d, pp in [(0.2, 10, 1.0), (0.5, 1, 0.5), (0.1, 3, 0.2)]:
            assert epsilon_schedule(1, alpha, d, pp) == 1.0

    def test_high_precision_constants(self):
        # Independent 50-digit evaluation of the same closed forms.
        mpmath.mp.dps = 50
        alpha, d, pp = mpmath.mpf("0.2"), 10, mpmath.mpf("1")
        A = (pp / d) * mpmath.log(1 / (1 - alpha)) / mpmath.log(1 / alpha)
        beta = 1 - 2 * A / (2 + 3 * A)
        eps1000 = mpmath.mpf(1000) ** (-(1 - beta) / 2)
        consts = ScheduleConstants.from_params(0.2, 10, 1.0)
        assert abs(consts.A - float(A)) < 1e-9
        assert abs(consts.beta - float(beta)) < 1e-9
        assert abs(epsilon_schedule(1000, 0.2, 10, 1.0) - float(eps1000)) < 1e-9

    def test_exponent_two_paths_agree(self):
        for alpha in (0.05, 0.2, 0.5):
            for d in (1, 4, 12):
                c = ScheduleConstants.from_params(alpha, d, 0.7)
                assert abs(c.exponent - c.A / (2.0 + 3.0 * c.A)) < 1e-12
                assert 0.0 < c.exponent < 0.5

    def test_monotone_decreasing_in_unit_interval(self):
        values = [epsilon_schedule(t, 0.2, 10, 1.0) for t in range(1, 2000, 37)]
        assert all(0.0 < v <= 1.0 for v in values)
        assert all(b < a for a, b in zip(values, values[1:]))

    def test_domain_validation(self):
        with pytest.raises(ValueError):
            epsilon_schedule(0, 0.2, 10, 1.0)
        with pytest.raises(ValueError):
            epsilon_schedule(1, 0.6, 10, 1.0)
        with pytest.raises(ValueError):
            epsilon_schedule(1, 0.2, 0, 1.0)
        with pytest.raises(ValueError):
            epsilon_schedule(1, 0.2, 10, 1.5)


class TestTraining:
    def test_single_sample_single_leaf(self):
        X = np.array([[0.4, -0.2]])
        f = train_forest(X, np.array([0]), np.array([0.9]),
                         ForestParams(n_actions=2, n_trees=5), rng(0))
        assert all(t.n_nodes == 1 for t in f.trees)
        assert f.predict(X[0], 0) == 0.9

    def test_two_cluster_split_location(self):
        g = rng(3)
        n = 200
        X = np.concatenate([np.full((n // 2, 1), -1.0), np.full((n // 2, 1), 1.0)])
        X = X + g.normal(0, 0.05, X.shape)
        y = np.where(X[:, 0] < 0, 0.0, 1.0)
        a = g.integers(0, 2, n)
        f = train_forest(X, a, y, ForestParams(n_actions=2, n_trees=40,
                                               min_action_count=1,
                                               subsample_exponent=1.0), rng(4))
        good = sum(1 for t in f.trees
                   if t.n_nodes > 1 and -1.0 < t.threshold[0] < 1.0)
        assert good >= 0.95 * len(f.trees)

    def test_parameter_validation(self):
        X = np.zeros((5, 2))
        with pytest.raises(ValueError):
            ForestParams(n_actions=2, alpha=0.7)
        with pytest.raises(ValueError):
            ForestParams(n_actions=2, min_action_count=0)
        with pytest.raises(ValueError):
            train_forest(X[:0], np.array([], dtype=int), np.array([]),
                         ForestParams(n_actions=2), rng(0))

    def test_regularity_audit_random_trainings(self):
        for seed in range(10):
            g = rng(seed)
            n = g.integers(30, 300)
            d = g.integers(1, 5)
            K = g.integers(2, 4)
            X = g.uniform(-1, 1, (n, d))
            a = g.integers(0, K, n)
            y = g.random(n)
            params = ForestParams(n_actions=int(K), n_trees=10,
                                  min_action_count=int(g.integers(1, 4)),
                                  subsample_exponent=float(g.uniform(0.7, 1.0)))
            f = train_forest(X, a, y, params, rng(seed + 100))
            report = audit_regularity(f)
            assert report.ok, (report.alpha_violations, report.action_violations,
                               report.flag_violations)

    def test_honesty_structure_invariant_to_i_rewards(self):
        # Same seed, responses permuted inside the tree's estimation half:
        # identical split structure.
        g = rng(8)
        n, d = 120, 3
        X = g.uniform(-1, 1, (n, d))
        a = g.integers(0, 2, n)
        y = g.random(n)
        params = ForestParams(n_actions=2, n_trees=1, min_action_count=1,
                              subsample_exponent=1.0, honest=True)
        for seed in range(5):
            f1 = train_forest(X, a, y, params, rng(seed))
            i_rows = f1.trees[0].i_rows.copy()
            y2 = y.copy()
            perm = rng(seed + 500).permutation(len(i_rows))
            y2[i_rows] = y2[i_rows][perm]
            f2 = train_forest(X, a, y2, params, rng(seed))
            assert f1.structure_digest() == f2.structure_digest()

    def test_adaptive_structure_changes_with_rewards(self):
        # Sanity for the honesty test: with honesty off, permuting rewards
        # generally moves the splits.
        g = rng(9)
        X = g.uniform(-1, 1, (150, 3))
        a = g.integers(0, 2, 150)
        y = np.where(X[:, 1] > 0, 1.0, 0.0)
        params = ForestParams(n_actions=2, n_trees=1, min_action_count=1,
                              subsample_exponent=1.0, honest=False)
        f1 = train_forest(X, a, y, params, rng(1))
        f2 = train_forest(X, a, g.permutation(y), params, rng(1))
        assert f1.structure_digest() != f2.structure_digest()

    def test_dump_and_digest_deterministic(self):
        _, _, _, f1 = train_simple(seed=7, n_trees=4, subsample_exponent=0.9)
        _, _, _, f2 = train_simple(seed=7, n_trees=4, subsample_exponent=0.9)
        assert f1.dump() == f2.dump()
        assert f1.structure_digest() == f2.structure_digest()


class TestLeafEstimates:
    def test_leaf_mean_two_thirds(self):
        X = np.array([[0.0], [0.1], [0.2]])
        a = np.array([0, 0, 0])
        y = np.array([1.0, 0.0, 1.0])
        f = train_forest(X, a, y, ForestParams(n_actions=2, n_trees=1,
                                               min_action_count=1, honest=False,
                                               subsample_exponent=1.0), rng(0))
        assert f.trees[0].leaf_estimate(np.array([0.05]), 0) == pytest.approx(2 / 3, abs=1e-15)

    def test_absent_when_action_unseen_in_leaf(self):
        X = np.array([[0.0], [0.1]])
        f = train_forest(X, np.array([0, 0]), np.array([1.0, 0.5]),
                         ForestParams(n_actions=2, n_trees=1, min_action_count=1,
                                      honest=False, subsample_exponent=1.0), rng(0))
        assert f.trees[0].leaf_estimate(np.array([0.0]), 1) is None

    def test_estimate_matches_brute_force_over_estimation_rows(self):
        X, actions, y, f = train_simple(n=300, K=3, seed=11, n_trees=6,
                                        min_action_count=2, subsample_exponent=0.95)
        g = rng(21)
        for tree in f.trees:
            leaf_of_rows = tree.apply(X[tree.i_rows])
            for _ in range(10):
                x = g.uniform(-1, 1, X.shape[1])
                leaf = tree.leaf_for(x)
                for a in range(3):
                    mask = (leaf_of_rows == leaf) & (actions[tree.i_rows] == a)
                    rows = tree.i_rows[mask]
                    est = tree.leaf_estimate(x, a)
                    if len(rows) == 0:
                        assert est is None
                    else:
                        assert est == pytest.approx(float(y[rows].mean()), abs=1e-12)


def single_leaf_tree(leaf_sum, leaf_cnt):
    K = len(leaf_sum)
    arrays = (np.array([-1], np.int32), np.zeros(1), np.array([-1], np.int32),
              np.array([-1], np.int32), np.zeros(1, np.int32), np.zeros(1, np.int32),
              np.zeros(1, np.int32), np.zeros(1, np.int32), np.zeros(1, np.uint8),
              np.array([], np.int32), np.array([], np.int32),
              np.asarray([leaf_sum], np.float64), np.asarray([leaf_cnt], np.int64))
    return Tree(arrays, np.array([], np.int64), np.array([], np.int64))


class TestPredict:
    def test_single_tree_predict_equals_leaf_estimate(self):
        X, _, _, f = train_simple(n_trees=1, subsample_exponent=1.0, honest=False,
                                  min_action_count=1)
        x = np.array([0.2, -0.4])
        for a in range(2):
            est = f.trees[0].leaf_estimate(x, a)
            if est is not None:
                assert f.predict(x, a) == est

    def test_average_over_trees_with_data(self):
        trees = [single_leaf_tree([0.2, 0.0], [1, 0]),
                 single_leaf_tree([0.4, 0.0], [1, 0]),
                 single_leaf_tree([0.0, 0.0], [0, 0])]
        params = ForestParams(n_actions=2, n_trees=3)
        f = MultiActionForest(trees, params, np.zeros((1, 1)), np.array([1]),
                              np.array([0.9]))
        # trees with data for action 0 estimate 0.2 and 0.4; third abstains
        assert f.predict(np.array([0.0]), 0) == pytest.approx(0.3, abs=1e-15)

    def test_constant_rewards_predict_constant(self):
        g = rng(2)
        X = g.uniform(-1, 1, (120, 2))
        a = g.integers(0, 2, 120)
        y = np.full(120, 0.37)
        f = train_forest(X, a, y, ForestParams(n_actions=2, n_trees=10,
                                               min_action_count=1), rng(3))
        for _ in range(20):
            x = g.uniform(-1, 1, 2)
            for act in range(2):
                assert f.predict(x, act) == pytest.approx(0.37, abs=1e-12)

    def test_fallback_global_mean_then_midpoint(self):
        trees = [single_leaf_tree([0.0, 0.0], [0, 0])]
        params = ForestParams(n_actions=2, n_trees=1, reward_range=(0.0, 1.0))
        f = MultiActionForest(trees, params, np.zeros((2, 1)), np.array([0, 0]),
                              np.array([0.2, 0.4]))
        assert f.predict(np.zeros(1), 0) == pytest.approx(0.3)   # global mean
        assert f.predict(np.zeros(1), 1) == pytest.approx(0.5)   # midpoint

    def test_prediction_bounded_by_training_range(self):
        X, actions, y, f = train_simple(n=250, seed=13, n_trees=8,
                                        min_action_count=1)
        g = rng(14)
        for _ in range(50):
            x = g.uniform(-1, 1, 2)
            for a in range(2):
                v = f.predict(x, a)
                assert y.min() - 1e-12 <= v <= y.max() + 1e-12


class TestLeafMembers:
    def make_logged(self, n=60, seed=1):
        from logbandit.core import LoggedDataset, LoggedRecord
        g = rng(seed)
        X = g.uniform(-1, 1, (n, 2))
        a = g.integers(0, 2, n)
        y = g.random(n)
        recs = [LoggedRecord(i, int(a[i]), X[i], float(y[i])) for i in range(n)]
        ds = LoggedDataset(recs, 2, 2)
        ids = np.arange(n)
        f = train_forest(X, a, y, ForestParams(n_actions=2, n_trees=3,
                                               min_action_count=1,
                                               subsample_exponent=0.9),
                         rng(seed + 1), record_ids=ids)
        return X, a, ds, f

    def test_single_leaf_tree_returns_all_with_action(self):
        from logbandit.core import LoggedDataset, LoggedRecord
        recs = [LoggedRecord(i, i % 2, np.array([float(i)]), 0.5) for i in range(6)]
        ds = LoggedDataset(recs, 2, 1)
        trees = [single_leaf_tree([0.0, 0.0], [0, 0])]
        f = MultiActionForest(trees, ForestParams(n_actions=2, n_trees=1),
                              np.array([[float(i)] for i in range(6)]),
                              np.array([i % 2 for i in range(6)]),
                              np.full(6, 0.5), record_ids=np.arange(6))
        assert f.leaf_members(0, np.array([2.0]), 0, ds) == {0, 2, 4}

    def test_members_match_brute_force_routing(self):
        X, a, ds, f = self.make_logged()
        g = rng(5)
        for b in range(f.n_trees):
            tree = f.trees[b]
            for _ in range(5):
                x = g.uniform(-1, 1, 2)
                leaf = tree.leaf_for(x)
                for act in range(2):
                    expected = {i for i in range(len(X))
                                if tree.leaf_for(X[i]) == leaf and a[i] == act}
                    assert f.leaf_members(b, x, act, ds) == expected

    def test_deleted_records_no_longer_members(self):
        X, a, ds, f = self.make_logged()
        x = X[0]
        act = int(a[0])
        before = f.leaf_members(0, x, act, ds)
        assert 0 in before
        ds.delete(0)
        assert 0 not in f.leaf_members(0, x, act, ds)


class TestBackendEquivalence:
    def test_forest_identical_under_pure_backend(self, monkeypatch):
        X, a, y, f_compiled = train_simple(n=150, K=2, seed=17, n_trees=5,
                                           subsample_exponent=0.9)
        if kernels.BACKEND == "pure":
            pytest.skip("compiled backend unavailable")
        monkeypatch.setattr(kernels, "build_tree", _pure.build_tree)
        monkeypatch.setattr(kernels, "tree_apply", _pure.tree_apply)
        monkeypatch.setattr(kernels, "walk_leaf", _pure.walk_leaf)
        monkeypatch.setattr(kernels, "forest_accumulate", _pure.forest_accumulate)
        X2, a2, y2, f_pure = train_simple(n=150, K=2, seed=17, n_trees=5,
                                          subsample_exponent=0.9)
        assert f_compiled.dump() == f_pure.dump()
        assert f_compiled.structure_digest() == f_pure.structure_digest()
        g = rng(30)
        for _ in range(20):
            x = g.uniform(-1, 1, 2)
            assert f_compiled.predict_all(x).tolist() == f_pure.predict_all(x).tolist()
