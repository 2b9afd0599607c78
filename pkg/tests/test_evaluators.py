"""Offline evaluators: matching, weighting, regression, and baselines."""

import math

import numpy as np
import pytest

from logbandit.core import DataError, LoggedDataset, LoggedRecord, as_context
from logbandit.environments import Example1Env
from logbandit.evaluators import (ExactMatching, FrequencyPropensity,
                                  HistoricalAverage, IPSWeighting,
                                  LinearRegressionEvaluator, MatchingOnForest,
                                  NullEvaluator, PropensityScoreMatching,
                                  default_pivots, stratify)
from logbandit.forest import ForestParams, MultiActionForest, Tree
from logbandit.oracles import LinUCB


def rng(seed=0):
    return np.random.default_rng(seed)


def dataset(rows, n_actions=2, d=1, **kw):
    recs = [LoggedRecord(i, a, as_context(x), y, **{k: v[i] for k, v in kw.items()})
            for i, (a, x, y) in enumerate(rows)]
    return LoggedDataset(recs, n_actions, d)


class TestNull:
    def test_always_absent(self):
        ev = NullEvaluator()
        for _ in range(5):
            assert ev.get_outcome(as_context([0.0]), 0) is None


class TestExactMatching:
    def test_empty_dataset_sets_stop(self):
        ds = dataset([], n_actions=2)
        ev = ExactMatching(ds, rng())
        assert ev.get_outcome(as_context([1.0]), 0) is None
        assert ev.stopped[0] and not ev.stopped[1]

    def test_two_step_trace(self):
        ds = dataset([(0, [1.0], 0.7)])
        ev = ExactMatching(ds, rng())
        assert ev.get_outcome(as_context([1.0]), 0) == 0.7
        assert len(ds) == 0
        assert ev.get_outcome(as_context([1.0]), 0) is None

    def test_stop_is_sticky(self):
        ds = dataset([(0, [1.0], 0.7), (0, [2.0], 0.9)])
        ev = ExactMatching(ds, rng())
        assert ev.get_outcome(as_context([5.0]), 0) is None  # no match: stop
        # a matching record still exists, but the flag is permanent
        assert ev.get_outcome(as_context([1.0]), 0) is None
        assert len(ds) == 2


class TestStratify:
    def test_nearest(self):
        assert stratify(np.array([0.4]), np.array([0.25, 0.75])) == (0.25,)
        assert stratify(np.array([0.6]), np.array([0.25, 0.75])) == (0.75,)

    def test_member_maps_to_itself(self):
        Q = default_pivots(2)
        for q in Q:
            assert stratify(q, Q) == tuple(q)

    def test_tie_breaks_lexicographically_smallest(self):
        assert stratify(np.array([0.5]), np.array([0.25, 0.75])) == (0.25,)
        Q2 = np.array([[0.2, 0.4], [0.4, 0.2]])
        assert stratify(np.array([0.3, 0.3]), Q2) == (0.2, 0.4)

    def test_default_grid_shape(self):
        Q = default_pivots(3)
        assert Q.shape == (121, 2)
        assert Q.min() == 0.0 and Q.max() == 1.0


def psm_fixture(vectors, actions, outcomes, pivots=None, n_actions=2):
    rows = [(a, [float(i)], y) for i, (a, y) in enumerate(zip(actions, outcomes))]
    vecs = [np.atleast_1d(np.asarray(v, dtype=np.float64)) for v in vectors]
    ds = dataset(rows, n_actions=n_actions, propensity_vector=vecs)
    # Queries carry explicit propensities through a lookup on the context.
    table = {float(i): np.concatenate([vecs[i], [1.0 - vecs[i].sum()]])
             for i in range(len(vecs))}

    def propensity(x):
        return table[float(x[0])]

    ev = PropensityScoreMatching(ds, rng(1), propensity=propensity, pivots=pivots)
    return ds, ev


class TestPSM:
    def test_uniform_within_stratum(self):
        # three records in one stratum: outcomes drawn uniformly
        counts = {0.1: 0, 0.2: 0, 0.3: 0}
        for seed in range(3000):
            ds, _ = psm_fixture([0.31, 0.29, 0.3], [0, 0, 0], [0.1, 0.2, 0.3],
                                pivots=np.array([0.3, 0.9]))
            ev = PropensityScoreMatching(
                ds, rng(seed), propensity=lambda x: np.array([0.3, 0.7]),
                pivots=np.array([0.3, 0.9]))
            counts[ev.get_outcome(as_context([0.0]), 0)] += 1
        freqs = np.array(list(counts.values())) / 3000
        se = math.sqrt((1 / 3) * (2 / 3) / 3000)
        assert np.all(np.abs(freqs - 1 / 3) <= 4 * se)

    def test_absent_and_sticky_when_cell_empty(self):
        ds, ev = psm_fixture([0.1, 0.9], [0, 0], [1.0, 0.5],
                             pivots=np.array([0.1, 0.9]))
        # stratum 0.9 has only action-0 records; ask for action 1
        assert ev.get_outcome(as_context([1.0]), 1) is None
        assert ev.stopped[1]
        assert ev.get_outcome(as_context([0.0]), 1) is None

    def test_match_deletes_record(self):
        ds, ev = psm_fixture([0.1], [0], [0.42], pivots=np.array([0.1, 0.9]))
        assert ev.get_outcome(as_context([0.0]), 0) == 0.42
        assert len(ds) == 0
        assert ev.get_outcome(as_context([0.0]), 0) is None

    def test_conditional_unbiasedness_two_strata(self):
        # Records in two strata with distinct outcome means; querying at
        # stratum-distributed contexts averages to the weighted stratum means.
        p_strata = [0.3, 0.7]             # stratum probabilities for queries
        mean_y = {0.2: 0.25, 0.8: 0.75}   # per-stratum outcome means
        g = rng(99)
        total = 0.0
        n_iter = 20_000
        for _ in range(n_iter):
            vecs, acts, ys = [], [], []
            for s, pv in ((0.2, 0.5), (0.8, 0.5)):
                for _ in range(2):
                    vecs.append(s)
                    acts.append(0)
                    ys.append(1.0 if g.random() < mean_y[s] else 0.0)
            ds, _ = psm_fixture(vecs, acts, ys, pivots=np.array([0.2, 0.8]))
            stratum = 0.2 if g.random() < p_strata[0] else 0.8
            ev = PropensityScoreMatching(
                ds, g, propensity=lambda x, s=stratum: np.array([s, 1 - s]),
                pivots=np.array([0.2, 0.8]))
            total += ev.get_outcome(as_context([0.0]), 0)
        expected = p_strata[0] * mean_y[0.2] + p_strata[1] * mean_y[0.8]
        se = math.sqrt(0.25 / n_iter)  # bernoulli-ish bound on the variance
        assert abs(total / n_iter - expected) <= 3 * se

    def test_missing_propensity_vector_uses_frequency_model(self):
        ds = dataset([(0, [1.0], 0.5), (1, [1.0], 0.7), (0, [0.0], 0.1)],
                     n_actions=2)
        ev = PropensityScoreMatching(ds, rng(0))
        # frequency model: p(a=0 | x=[1]) = 1/2; query context must be known
        assert isinstance(ev.propensity, FrequencyPropensity)
        assert ev.get_outcome(as_context([1.0]), 1) == 0.7
        with pytest.raises(DataError):
            ev.get_outcome(as_context([9.0]), 0)


class TestIPSW:
    def test_weighted_mean_and_budget(self):
        ds = dataset([(0, [0.0], 1.0), (0, [0.0], 0.0)],
                     propensity_chosen=[0.5, 0.25])
        ev = IPSWeighting(ds)
        assert ev.means[0] == pytest.approx(1 / 3, abs=1e-15)
        assert ev.initial_budgets[0] == pytest.approx(1.8, abs=1e-12)
        # floor(1.8) = exactly one emission
        assert ev.get_outcome(as_context([0.0]), 0) == pytest.approx(1 / 3)
        for _ in range(3):
            assert ev.get_outcome(as_context([0.0]), 0) is None

    def test_constant_propensity_gives_raw_count(self):
        ds = dataset([(0, [0.0], 0.5)] * 10, propensity_chosen=[0.2] * 10)
        ev = IPSWeighting(ds)
        assert ev.initial_budgets[0] == pytest.approx(10.0, abs=1e-9)

    def test_action_without_records_absent(self):
        ds = dataset([(0, [0.0], 0.5)], propensity_chosen=[0.5])
        ev = IPSWeighting(ds)
        assert ev.initial_budgets[1] == 0.0
        assert ev.get_outcome(as_context([0.0]), 1) is None

    def test_missing_propensity_rejected(self):
        ds = dataset([(0, [0.0], 0.5)])
        with pytest.raises(DataError):
            IPSWeighting(ds)

    def test_ess_never_exceeds_record_count(self):
        g = rng(4)
        for _ in range(30):
            n = int(g.integers(1, 40))
            rows = [(int(g.integers(0, 2)), [0.0], float(g.random())) for _ in range(n)]
            ps = list(g.uniform(0.05, 1.0, n))
            ev = IPSWeighting(dataset(rows, propensity_chosen=ps))
            assert ev.initial_budgets.sum() <= n + 1e-9


class TestLinearRegression:
    def fmap(self, d, K):
        from logbandit.oracles import BlockOneHotFeatures
        return BlockOneHotFeatures(d, K)

    def test_empty_log(self):
        fmap = self.fmap(1, 2)
        oracle = LinUCB(2, fmap)
        ev = LinearRegressionEvaluator(dataset([], n_actions=2), fmap, oracle)
        assert np.array_equal(ev.V_hat, np.eye(fmap.dim))
        assert np.array_equal(ev.theta_hat, np.zeros(fmap.dim))

    def test_single_item_closed_form(self):
        class TwoDim:
            dim = 2

            def __call__(self, x, a):
                return np.array([1.0, 0.0])

        fmap = TwoDim()
        oracle = LinUCB(1, fmap, dim=2)
        ds = dataset([(0, [0.0], 2.0)], n_actions=1)
        ev = LinearRegressionEvaluator(ds, fmap, oracle)
        assert np.allclose(ev.V_hat, [[2.0, 0.0], [0.0, 1.0]], atol=0)
        assert np.allclose(ev.theta_hat, [1.0, 0.0], atol=0)

    def test_recovers_noiseless_linear_model(self):
        g = rng(8)
        fmap = self.fmap(3, 2)
        theta = g.normal(size=fmap.dim)
        rows = []
        for _ in range(10 * fmap.dim):
            x = g.uniform(-1, 1, 3)
            a = int(g.integers(0, 2))
            rows.append((a, list(x), float(theta @ fmap(as_context(x), a))))
        ds = dataset(rows, n_actions=2, d=3)
        oracle = LinUCB(2, fmap)
        ev = LinearRegressionEvaluator(ds, fmap, oracle)
        # dense oracle for the same ridge system
        V = np.eye(fmap.dim)
        b = np.zeros(fmap.dim)
        for rec in [LoggedRecord(i, a, as_context(x), y)
                    for i, (a, x, y) in enumerate(rows)]:
            phi = fmap(rec.context, rec.action)
            V += np.outer(phi, phi)
            b += rec.outcome * phi
        dense = np.linalg.solve(V, b)
        assert np.max(np.abs(ev.theta_hat - dense)) < 1e-9
        shrinkage = np.linalg.norm(theta) / np.linalg.eigvalsh(V)[0]
        assert np.linalg.norm(ev.theta_hat - theta) <= shrinkage + 1e-9

    def condition_fixture(self, n_logged):
        class Fixed:
            dim = 1

            def __call__(self, x, a):
                return np.array([0.5])

        fmap = Fixed()
        oracle = LinUCB(1, fmap, dim=1)
        ds = dataset([(0, [0.0], 1.0)] * n_logged, n_actions=1)
        return fmap, oracle, LinearRegressionEvaluator(ds, fmap, oracle)

    def test_fresh_oracle_receives_outcomes(self):
        fmap, oracle, ev = self.condition_fixture(20)
        # online width 0.25/1.25 = 0.2 exceeds offline 0.25/6 -> emit
        y = ev.get_outcome(as_context([0.0]), 0)
        assert y is not None
        assert y == pytest.approx(float(np.array([0.5]) @ ev.theta_hat))

    def test_dominated_direction_absent(self):
        fmap, oracle, ev = self.condition_fixture(5)
        for _ in range(10):
            oracle.update(as_context([0.0]), 0, 1.0)
        # online V now dominates V_hat along phi
        assert ev.get_outcome(as_context([0.0]), 0) is None

    def test_zero_feature_absent(self):
        class Zero:
            dim = 1

            def __call__(self, x, a):
                return np.zeros(1)

        fmap = Zero()
        oracle = LinUCB(1, fmap, dim=1)
        ev = LinearRegressionEvaluator(dataset([], n_actions=1), fmap, oracle)
        assert ev.get_outcome(as_context([0.0]), 0) is None

    def test_budget_is_finite(self):
        fmap, oracle, ev = self.condition_fixture(50)
        emitted = 0
        while True:
            y = ev.get_outcome(as_context([0.0]), 0)
            if y is None:
                break
            oracle.update(as_context([0.0]), 0, y)
            emitted += 1
            assert emitted <= 500
        assert emitted > 0


def split_tree(feature, threshold, n_actions=2):
    arrays = (np.array([feature, -1, -1], np.int32),
              np.array([threshold, 0.0, 0.0]),
              np.array([1, -1, -1], np.int32), np.array([2, -1, -1], np.int32),
              np.zeros(3, np.int32), np.zeros(3, np.int32),
              np.zeros(3, np.int32), np.zeros(3, np.int32),
              np.zeros(3, np.uint8), np.array([], np.int32), np.array([], np.int32),
              np.zeros((3, n_actions)), np.zeros((3, n_actions), np.int64))
    return Tree(arrays, np.array([], np.int64), np.array([], np.int64))


def leaf_tree(n_actions=2):
    arrays = (np.array([-1], np.int32), np.zeros(1), np.array([-1], np.int32),
              np.array([-1], np.int32), np.zeros(1, np.int32), np.zeros(1, np.int32),
              np.zeros(1, np.int32), np.zeros(1, np.int32), np.zeros(1, np.uint8),
              np.array([], np.int32), np.array([], np.int32),
              np.zeros((1, n_actions)), np.zeros((1, n_actions), np.int64))
    return Tree(arrays, np.array([], np.int64), np.array([], np.int64))


class TestMatchingOnForest:
    def single_leaf_setup(self):
        X = np.array([[0.1, 0.0], [0.2, 0.0]])
        recs = [LoggedRecord(0, 0, X[0], 0.3), LoggedRecord(1, 0, X[1], 0.9)]
        ds = LoggedDataset(recs, 2, 2)
        f = MultiActionForest([leaf_tree()], ForestParams(n_actions=2, n_trees=1),
                              X, np.array([0, 0]), np.array([0.3, 0.9]),
                              record_ids=np.arange(2))
        return ds, MatchingOnForest(f, ds, rng(3))

    def test_exhaustion_trace(self):
        ds, ev = self.single_leaf_setup()
        x = as_context([0.0, 0.0])
        got = {ev.get_outcome(x, 0), ev.get_outcome(x, 0)}
        assert got == {0.3, 0.9}
        assert ev.get_outcome(x, 0) is None
        assert len(ds) == 0

    def test_absent_for_unlogged_action(self):
        ds, ev = self.single_leaf_setup()
        assert ev.get_outcome(as_context([0.0, 0.0]), 1) is None
        # no stop flags: action 0 still reachable afterwards
        assert ev.get_outcome(as_context([0.0, 0.0]), 0) is not None

    def test_tree_count_weighting(self):
        # Record U shares the query leaf in 2 of 3 trees, record V in 1 of 3:
        # U is returned first twice as often.
        X = np.array([[0.3, 0.9], [0.7, 0.1]])  # U, V
        y = np.array([1.0, 2.0])
        trees = lambda: [split_tree(1, 0.5), split_tree(0, 0.5), split_tree(0, 0.5)]
        hits = {1.0: 0, 2.0: 0}
        n_iter = 100_000
        g = rng(17)
        f = MultiActionForest(trees(), ForestParams(n_actions=2, n_trees=3),
                              X, np.array([0, 0]), y, record_ids=np.arange(2))
        for _ in range(n_iter):
            recs = [LoggedRecord(0, 0, X[0], 1.0), LoggedRecord(1, 0, X[1], 2.0)]
            ds = LoggedDataset(recs, 2, 2)
            ev = MatchingOnForest(f, ds, g)
            out = ev.get_outcome(as_context([0.2, 0.2]), 0)
            if out is None:
                out = ev.get_outcome(as_context([0.2, 0.2]), 0)
            hits[out] += 1
        ratio = hits[1.0] / hits[2.0]
        assert abs(ratio - 2.0) <= 0.2  # +-10% relative

    def test_requires_record_ids(self):
        X = np.array([[0.0]])
        f = MultiActionForest([leaf_tree()], ForestParams(n_actions=2, n_trees=1),
                              X, np.array([0]), np.array([1.0]))
        ds = LoggedDataset([LoggedRecord(0, 0, X[0], 1.0)], 2, 1)
        with pytest.raises(ValueError):
            MatchingOnForest(f, ds, rng(0))


class TestHistoricalAverage:
    def test_serves_each_record_once(self):
        ds = dataset([(0, [0.0], 0.1), (0, [1.0], 0.5), (0, [2.0], 0.9),
                      (1, [0.0], 0.4)])
        ev = HistoricalAverage(ds, rng(2))
        outs = [ev.get_outcome(as_context([9.0]), 0) for _ in range(3)]
        assert sorted(outs) == [0.1, 0.5, 0.9]
        assert ev.get_outcome(as_context([9.0]), 0) is None
        assert ev.get_outcome(as_context([9.0]), 1) == 0.4

    def test_mean_of_emissions_is_raw_average(self):
        g = rng(3)
        ys = list(g.random(12))
        ds = dataset([(0, [float(i)], y) for i, y in enumerate(ys)])
        ev = HistoricalAverage(ds, g)
        outs = [ev.get_outcome(as_context([0.0]), 0) for _ in range(12)]
        assert np.mean(outs) == pytest.approx(np.mean(ys), abs=1e-12)

    def test_ad_example_log_prefers_inferior_action(self):
        # Pooled logged means 8% vs 6%: the context-blind warm start ranks the
        # inferior placement first.
        env = Example1Env()
        ds = env.make_logged_dataset(env.expected_log_clicks())
        ev = HistoricalAverage(ds, rng(1))
        sums = np.zeros(2)
        counts = np.zeros(2)
        for a in range(2):
            while True:
                y = ev.get_outcome(as_context([0.0]), a)
                if y is None:
                    break
                sums[a] += y
                counts[a] += 1
        means = sums / counts
        assert means[0] == pytest.approx(0.08, abs=1e-12)
        assert means[1] == pytest.approx(0.06, abs=1e-12)
        assert np.argmax(means) == 0  # the inferior action
