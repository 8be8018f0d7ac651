import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddosml.exceptions import ArgumentError, NotEnoughSplitsError
from ddosml.trees import (
    EXTRA_TREES_DEFAULTS,
    DecisionTreeClassifier,
    ExtraTreesClassifier,
    ForestConfig,
    RandomForestClassifier,
    Tree,
    TreeConfig,
    entropy,
    find_best_split,
    fit_forest,
    fit_tree,
    impurity_importances,
    information_gain,
    predict_forest,
    predict_tree,
    tree_rng,
    vote_fractions,
)


def brute_force_split(X, y, n_labels):
    """Loop over every (feature, midpoint) with the scalar gain function."""
    best = (-1.0, None, None)
    parent = np.bincount(y, minlength=n_labels)
    for f in range(X.shape[1]):
        values = sorted(set(X[:, f].tolist()))
        for a, b in zip(values, values[1:]):
            t = (a + b) / 2
            left = np.bincount(y[X[:, f] <= t], minlength=n_labels)
            g = information_gain(parent, [left, parent - left])
            if g > best[0] + 1e-12:
                best = (g, f, t)
    return best


class TestEntropy:
    def test_hand_values(self):
        assert entropy([2, 2, 4]) == pytest.approx(1.5, abs=1e-12)
        assert entropy([5]) == 0.0
        assert entropy([1, 1]) == pytest.approx(1.0, abs=1e-12)

    def test_gain_example(self):
        # H([6,2]) - (4/8)*0 - (4/8)*1
        g = information_gain([6, 2], [[4, 0], [2, 2]])
        assert g == pytest.approx(0.31127812445913283, abs=1e-12)

    def test_empty_counts_rejected(self):
        with pytest.raises(ArgumentError):
            entropy([0, 0])

    def test_children_must_partition_parent(self):
        with pytest.raises(ArgumentError):
            information_gain([3, 3], [[1, 1], [1, 1]])

    @given(st.lists(st.integers(0, 50), min_size=1, max_size=6).filter(lambda c: sum(c) > 0))
    def test_entropy_bounds(self, counts):
        h = entropy(counts)
        nonzero = sum(1 for c in counts if c)
        assert -1e-12 <= h <= math.log2(max(nonzero, 1)) + 1e-12


class TestSplit:
    def test_midpoint_example(self):
        X = np.array([[1.0], [2.0], [8.0], [9.0]])
        y = np.array([0, 0, 1, 1])
        rule, gain = find_best_split(np.arange(4), X, y, [0], 2)
        assert rule.threshold == 5.0 and gain == pytest.approx(1.0, abs=1e-12)

    def test_constant_features_give_no_split(self):
        X = np.ones((4, 2))
        assert find_best_split(np.arange(4), X, np.array([0, 1, 0, 1]), [0, 1], 2) is None

    def test_adjacent_floats_never_route_upper_value_left(self):
        a = 1.0
        b = np.nextafter(a, 2.0)
        X = np.array([[a], [b]])
        rule, _ = find_best_split(np.arange(2), X, np.array([0, 1]), [0], 2)
        assert a <= rule.threshold < b

    @settings(max_examples=80, deadline=None)
    @given(st.integers(2, 50), st.integers(1, 5), st.integers(2, 4), st.integers(0, 10**6))
    def test_matches_brute_force(self, n, d, n_labels, seed):
        rng = np.random.default_rng(seed)
        X = rng.integers(0, 6, size=(n, d)).astype(float)
        y = rng.integers(0, n_labels, size=n)
        oracle_gain, oracle_f, oracle_t = brute_force_split(X, y, n_labels)
        found = find_best_split(np.arange(n), X, y, range(d), n_labels)
        if oracle_gain <= 1e-12:
            assert found is None
            return
        rule, gain = found
        assert gain == pytest.approx(oracle_gain, abs=1e-12)
        assert (rule.feature, rule.threshold) == (oracle_f, oracle_t)

    def test_random_threshold_is_inside_range(self):
        X = np.array([[0.0], [10.0], [10.0]])
        y = np.array([0, 1, 1])
        rng = np.random.default_rng(3)
        for _ in range(50):
            rule, gain = find_best_split(np.arange(3), X, y, [0], 2, "random_threshold", rng)
            assert 0.0 < rule.threshold < 10.0
            assert gain == pytest.approx(entropy([1, 2]), abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**6))
    def test_exhaustive_gain_dominates_random(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(30, 3))
        y = rng.integers(0, 3, size=30)
        ex = find_best_split(np.arange(30), X, y, range(3), 3, require_gain=False)
        rnd = find_best_split(np.arange(30), X, y, range(3), 3, "random_threshold", rng,
                              require_gain=False)
        assert ex[1] >= rnd[1] - 1e-12


class TestTree:
    def test_memorizes_distinct_rows(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(200, 4))
        y = rng.integers(0, 3, size=200)
        tree = fit_tree(np.arange(200), X, y, 3)
        assert (np.argmax(tree.predict_proba(X), axis=1) == y).all()

    def test_xor_is_memorized(self):
        X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
        y = np.array([0, 1, 1, 0])
        tree = fit_tree(np.arange(4), X, y, 2)
        assert (np.argmax(tree.predict_proba(X), axis=1) == y).all()

    def test_single_row_is_a_leaf(self):
        tree = fit_tree([0], np.array([[3.0, 1.0]]), np.array([1]), 2)
        assert tree.node_count == 1 and tree.depth() == 0
        assert predict_tree(tree, [0.0, 0.0]).tolist() == [0.0, 1.0]

    def test_max_depth_zero_predicts_majority(self):
        X = np.arange(10, dtype=float)[:, None]
        y = np.array([0] * 3 + [1] * 7)
        tree = fit_tree(np.arange(10), X, y, 2, TreeConfig(max_depth=0))
        assert tree.node_count == 1
        np.testing.assert_allclose(predict_tree(tree, [4.0]), [0.3, 0.7])

    def test_max_depth_respected(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(100, 3))
        y = rng.integers(0, 2, size=100)
        assert fit_tree(np.arange(100), X, y, 2, TreeConfig(max_depth=3)).depth() <= 3

    def test_tie_goes_left(self):
        X = np.array([[1.0], [3.0]])
        tree = fit_tree(np.arange(2), X, np.array([0, 1]), 2)
        assert tree.threshold[0] == 2.0
        assert predict_tree(tree, [2.0]).tolist() == [1.0, 0.0]

    def test_nan_record_rejected(self):
        tree = fit_tree([0], np.array([[1.0]]), np.array([0]), 1)
        with pytest.raises(ArgumentError):
            predict_tree(tree, [math.nan])

    def test_wrong_width_rejected(self):
        tree = fit_tree([0], np.array([[1.0]]), np.array([0]), 1)
        with pytest.raises(ArgumentError):
            predict_tree(tree, [1.0, 2.0])

    def test_node_invariants(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(120, 5))
        y = rng.integers(0, 3, size=120)
        tree = fit_tree(np.arange(120), X, y, 3)
        for i in np.flatnonzero(tree.feature >= 0):
            l, r = tree.left[i], tree.right[i]
            assert l > i and r > l
            np.testing.assert_array_equal(tree.counts[l] + tree.counts[r], tree.counts[i])
            assert tree.gain[i] >= 0

    def test_serialization_roundtrip(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(60, 3))
        y = rng.integers(0, 2, size=60)
        tree = fit_tree(np.arange(60), X, y, 2)
        again = Tree.from_dict(tree.to_dict())
        assert again.to_dict() == tree.to_dict()
        np.testing.assert_array_equal(again.predict_proba(X), tree.predict_proba(X))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**6))
    def test_probabilities_sum_to_one(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(40, 3))
        y = rng.integers(0, 4, size=40)
        tree = fit_tree(np.arange(40), X, y, 4, TreeConfig(max_depth=2))
        p = tree.predict_proba(rng.normal(size=(10, 3)))
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
        assert (p >= 0).all()


class TestForest:
    def _data(self, seed=0, n=150, d=6):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(n, d))
        y = (X[:, 0] + 0.5 * X[:, 1] > 0).astype(int) + (X[:, 2] > 1).astype(int)
        return X, y

    def test_single_tree_forest_equals_tree(self):
        X, y = self._data()
        config = ForestConfig(n_trees=1, bootstrap=False, features_per_split=None)
        (forest_tree,) = fit_forest(X, y, 3, config)
        plain = fit_tree(np.arange(X.shape[0]), X, y, 3)
        assert forest_tree.to_dict() == plain.to_dict()

    def test_independent_of_n_jobs(self):
        X, y = self._data()
        config = ForestConfig(n_trees=8, seed=11)
        a = fit_forest(X, y, 3, config, n_jobs=1)
        b = fit_forest(X, y, 3, config, n_jobs=4)
        assert [t.to_dict() for t in a] == [t.to_dict() for t in b]

    def test_more_trees_extend_same_prefix(self):
        X, y = self._data()
        small = fit_forest(X, y, 3, ForestConfig(n_trees=3, seed=5))
        large = fit_forest(X, y, 3, ForestConfig(n_trees=6, seed=5))
        assert [t.to_dict() for t in small] == [t.to_dict() for t in large[:3]]

    def test_tree_rng_streams_differ(self):
        assert tree_rng(0, 0).integers(1 << 62) != tree_rng(0, 1).integers(1 << 62)

    def test_vote_fractions(self):
        X = np.array([[0.0], [1.0]])
        trees = [fit_tree([0, 1], X, np.array(lbl), 2) for lbl in ([0, 1], [0, 1], [1, 0])]
        v = vote_fractions(trees, X)
        np.testing.assert_allclose(v, [[2 / 3, 1 / 3], [1 / 3, 2 / 3]])
        assert predict_forest(trees, [0.0]).tolist() == v[0].tolist()

    def test_forest_nan_rejected(self):
        X, y = self._data()
        trees = fit_forest(X, y, 3, ForestConfig(n_trees=2))
        with pytest.raises(ArgumentError):
            predict_forest(trees, [math.nan] * X.shape[1])

    def test_one_hot_label_feature_gets_all_importance(self):
        rng = np.random.default_rng(0)
        y = rng.integers(0, 3, size=300)
        X = np.column_stack([rng.normal(size=300), np.eye(3)[y], rng.normal(size=300)])
        trees = fit_forest(X, y, 3, ForestConfig(n_trees=20, features_per_split=None))
        imp = impurity_importances(trees)
        assert imp.sum() == pytest.approx(1.0, abs=1e-12)
        assert imp[1:4].sum() == pytest.approx(1.0, abs=1e-12)

    def test_no_splits_raises(self):
        X = np.ones((5, 2))
        trees = fit_forest(X, np.zeros(5, dtype=int), 1, ForestConfig(n_trees=2))
        with pytest.raises(NotEnoughSplitsError):
            impurity_importances(trees)

    def test_config_validation(self):
        with pytest.raises(ArgumentError):
            ForestConfig(n_trees=0)
        with pytest.raises(ArgumentError):
            ForestConfig(split_mode="best")
        with pytest.raises(ArgumentError):
            ForestConfig(features_per_split=9).resolve_features(3)
        assert ForestConfig().resolve_features(87) == 9
        assert ForestConfig().resolve_features(1) == 1

    def test_extra_trees_defaults(self):
        assert EXTRA_TREES_DEFAULTS.bootstrap is False
        assert EXTRA_TREES_DEFAULTS.split_mode == "random_threshold"


class TestEstimators:
    def test_sklearn_params_and_fit(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(200, 4))
        y = np.where(X[:, 0] > 0, "attack", "benign")
        for est in (DecisionTreeClassifier(), RandomForestClassifier(n_trees=10), ExtraTreesClassifier(n_trees=10)):
            est.fit(X, y)
            assert (est.predict(X) == y).mean() > 0.95
            assert set(est.classes_) == {"attack", "benign"}
            assert est.feature_importances_.argmax() == 0
            clone = type(est)(**est.get_params())
            assert clone.get_params() == est.get_params()

    def test_state_roundtrip(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(80, 3))
        y = rng.integers(0, 3, size=80)
        for est in (DecisionTreeClassifier(max_depth=4), RandomForestClassifier(n_trees=5, n_jobs=2)):
            est.fit(X, y)
            again = type(est).from_state(est.get_state())
            np.testing.assert_array_equal(again.predict_proba(X), est.predict_proba(X))

    def test_predict_rejects_nan_and_width(self):
        est = DecisionTreeClassifier().fit(np.eye(3), [0, 1, 2])
        with pytest.raises(ArgumentError):
            est.predict([[math.nan, 0, 0]])
        with pytest.raises(ArgumentError):
            est.predict([[0, 0]])

    def test_infinite_input_routes_to_extremes(self):
        est = DecisionTreeClassifier().fit([[0.0], [1.0]], [0, 1])
        assert est.predict([[-math.inf], [math.inf]]).tolist() == [0, 1]
