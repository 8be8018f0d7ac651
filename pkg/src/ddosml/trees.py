"""Entropy decision trees and the two forest variants built from them.

Both ensembles grow the same information-gain trees. The random forest
bootstraps rows and searches every midpoint threshold on a random feature
subset; the extra-trees variant keeps all rows and scores one uniformly
drawn threshold per candidate feature.

Trees are stored as flat node arrays in depth-first (left child first)
order so prediction is a vectorized walk and serialization is a plain list.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import ArgumentError, NotEnoughSplitsError

# Gains at or below this are float noise from an uninformative partition.
GAIN_EPS = 1e-12


def entropy(counts) -> float:
    """Shannon entropy in bits of a label-count vector."""
    counts = np.asarray(counts, dtype=np.float64)
    total = counts.sum()
    if total <= 0:
        raise ArgumentError("entropy of an empty count vector is undefined")
    p = counts[counts > 0] / total
    return float(-(p * np.log2(p)).sum())


def information_gain(parent, children) -> float:
    parent = np.asarray(parent, dtype=np.int64)
    children = [np.asarray(c, dtype=np.int64) for c in children]
    if not children or not np.array_equal(np.sum(children, axis=0), parent):
        raise ArgumentError("children counts do not partition the parent counts")
    n = parent.sum()
    weighted = sum(c.sum() / n * entropy(c) for c in children if c.sum() > 0)
    return entropy(parent) - weighted


def _entropy_rows(counts: np.ndarray) -> np.ndarray:
    """Row-wise entropy (bits) of a 2-D count matrix; empty rows give 0."""
    totals = counts.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = counts / totals
        terms = np.where(p > 0, p * np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return -terms.sum(axis=1)


@dataclass(frozen=True)
class SplitRule:
    """Route a record left iff ``record[feature] <= threshold``."""

    feature: int
    threshold: float


def _midpoint(a: float, b: float) -> float:
    mid = a / 2.0 + b / 2.0
    # Adjacent floats: the midpoint can round up onto b and send it left.
    if mid >= b:
        mid = a
    return mid


def find_best_split(rows, X, y, candidate_features, n_labels, mode="exhaustive",
                    rng=None, require_gain=True):
    """Best ``(SplitRule, gain)`` over the candidate features, or None.

    ``exhaustive`` scores every midpoint between consecutive distinct values;
    ``random_threshold`` scores one threshold drawn uniformly in
    ``(min, max)`` per feature. Ties keep the earliest candidate feature and
    the lowest threshold. With ``require_gain`` a split must beat
    ``GAIN_EPS``; otherwise any two-sided partition qualifies.
    """
    rows = np.asarray(rows)
    y_rows = y[rows]
    n = rows.size
    parent = np.bincount(y_rows, minlength=n_labels)
    parent_h = _entropy_rows(parent[None, :].astype(np.float64))[0]
    best = None
    best_gain = -math.inf
    if mode == "exhaustive":
        onehot = np.eye(n_labels, dtype=np.float64)[y_rows]
    elif mode != "random_threshold":
        raise ArgumentError(f"unknown split mode {mode!r}")

    for f in candidate_features:
        v = X[rows, f]
        if mode == "exhaustive":
            order = np.argsort(v, kind="stable")
            vs = v[order]
            cut = np.flatnonzero(vs[:-1] < vs[1:])
            if cut.size == 0:
                continue
            left = np.cumsum(onehot[order], axis=0)[cut]
            right = parent - left
            n_left = (cut + 1).astype(np.float64)
            gains = parent_h - (n_left * _entropy_rows(left)
                                + (n - n_left) * _entropy_rows(right)) / n
            k = int(np.argmax(gains))
            gain = float(gains[k])
            if gain > best_gain:
                best_gain = gain
                best = SplitRule(int(f), _midpoint(float(vs[cut[k]]), float(vs[cut[k] + 1])))
        else:
            lo, hi = float(v.min()), float(v.max())
            if not lo < hi:
                continue
            threshold = lo
            while threshold <= lo:
                threshold = float(rng.uniform(lo, hi))
            go_left = v <= threshold
            left = np.bincount(y_rows[go_left], minlength=n_labels)
            right = parent - left
            n_left = go_left.sum()
            children_h = _entropy_rows(np.vstack([left, right]).astype(np.float64))
            gain = float(parent_h - (n_left * children_h[0] + (n - n_left) * children_h[1]) / n)
            if gain > best_gain:
                best_gain = gain
                best = SplitRule(int(f), threshold)

    if best is None or (require_gain and best_gain <= GAIN_EPS):
        return None
    return best, max(best_gain, 0.0)


@dataclass(frozen=True)
class TreeConfig:
    max_depth: int | None = None
    min_samples_split: int = 2
    features_per_split: int | None = None  # None = all features
    split_mode: str = "exhaustive"


class Tree:
    """Fitted tree as parallel node arrays.

    ``feature[i] == -1`` marks a leaf. ``counts[i]`` is the label histogram
    of the training rows reaching node ``i`` (kept for internal nodes too).
    """

    def __init__(self, feature, threshold, left, right, gain, n_samples, counts, n_features):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.gain = np.asarray(gain, dtype=np.float64)
        self.n_samples = np.asarray(n_samples, dtype=np.int64)
        self.counts = np.asarray(counts, dtype=np.int64).reshape(len(self.feature), -1)
        self.n_features = int(n_features)

    @property
    def n_labels(self) -> int:
        return self.counts.shape[1]

    @property
    def node_count(self) -> int:
        return self.feature.size

    def depth(self) -> int:
        depth = np.zeros(self.node_count, dtype=np.int64)
        for i in range(self.node_count):
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by each row of ``X``."""
        X = np.asarray(X, dtype=np.float64)
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.flatnonzero(self.feature[node] >= 0)
        while active.size:
            cur = node[active]
            go_left = X[active, self.feature[cur]] <= self.threshold[cur]
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = active[self.feature[node[active]] >= 0]
        return node

    def predict_proba(self, X) -> np.ndarray:
        leaf = self.counts[self.apply(X)].astype(np.float64)
        return leaf / leaf.sum(axis=1, keepdims=True)

    def importances(self) -> np.ndarray:
        """Unnormalized weighted gain per feature: sum of (n_node/n_root)*gain."""
        out = np.zeros(self.n_features)
        internal = self.feature >= 0
        np.add.at(out, self.feature[internal],
                  self.n_samples[internal] / self.n_samples[0] * self.gain[internal])
        return out

    def to_dict(self):
        nodes = []
        for i in range(self.node_count):
            if self.feature[i] < 0:
                nodes.append({"counts": self.counts[i].tolist()})
            else:
                nodes.append({
                    "feature": int(self.feature[i]),
                    "threshold": float(self.threshold[i]),
                    "gain": float(self.gain[i]),
                    "n": int(self.n_samples[i]),
                    "left": int(self.left[i]),
                    "right": int(self.right[i]),
                    "counts": self.counts[i].tolist(),
                })
        return {"n_features": self.n_features, "n_labels": self.n_labels, "nodes": nodes}

    @classmethod
    def from_dict(cls, d):
        nodes = d["nodes"]
        leaf = [("feature" not in nd) for nd in nodes]
        return cls(
            feature=[-1 if lf else nd["feature"] for lf, nd in zip(leaf, nodes)],
            threshold=[0.0 if lf else nd["threshold"] for lf, nd in zip(leaf, nodes)],
            left=[-1 if lf else nd["left"] for lf, nd in zip(leaf, nodes)],
            right=[-1 if lf else nd["right"] for lf, nd in zip(leaf, nodes)],
            gain=[0.0 if lf else nd["gain"] for lf, nd in zip(leaf, nodes)],
            n_samples=[sum(nd["counts"]) if lf else nd["n"] for lf, nd in zip(leaf, nodes)],
            counts=[nd["counts"] for nd in nodes] or np.empty((0, d["n_labels"])),
            n_features=d["n_features"],
        )


def fit_tree(rows, X, y, n_labels, config: TreeConfig = TreeConfig(), rng=None) -> Tree:
    """Grow one tree on ``X[rows]`` (rows may repeat, as in a bootstrap).

    A node becomes a leaf when it is pure, holds fewer than
    ``min_samples_split`` rows, sits at ``max_depth``, or admits no two-sided
    partition. An impure node whose best split has zero gain (XOR-like
    layouts) is still split so training data can always be memorized.
    """
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise ArgumentError("cannot fit a tree on zero rows")
    n_features = X.shape[1]
    k = config.features_per_split or n_features
    if k > n_features:
        raise ArgumentError(f"features_per_split={k} exceeds feature count {n_features}")
    if config.split_mode == "random_threshold" and rng is None:
        raise ArgumentError("random_threshold mode needs an rng")

    feature, threshold, left, right, gain, n_samples, counts = [], [], [], [], [], [], []
    # (rows, depth, parent id, is-left-child)
    stack = [(rows, 0, -1, False)]
    while stack:
        node_rows, depth, parent, is_left = stack.pop()
        node_id = len(feature)
        if parent >= 0:
            (left if is_left else right)[parent] = node_id
        node_counts = np.bincount(y[node_rows], minlength=n_labels)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        gain.append(0.0)
        n_samples.append(node_rows.size)
        counts.append(node_counts)

        if (np.count_nonzero(node_counts) <= 1
                or node_rows.size < config.min_samples_split
                or (config.max_depth is not None and depth >= config.max_depth)):
            continue
        if k == n_features:
            candidates = np.arange(n_features)
        else:
            candidates = rng.choice(n_features, size=k, replace=False)
        found = find_best_split(node_rows, X, y, candidates, n_labels, config.split_mode, rng)
        if found is None:
            found = find_best_split(node_rows, X, y, candidates, n_labels,
                                    config.split_mode, rng, require_gain=False)
        if found is None:
            continue
        rule, g = found
        go_left = X[node_rows, rule.feature] <= rule.threshold
        feature[node_id] = rule.feature
        threshold[node_id] = rule.threshold
        gain[node_id] = g
        stack.append((node_rows[~go_left], depth + 1, node_id, False))
        stack.append((node_rows[go_left], depth + 1, node_id, True))

    return Tree(feature, threshold, left, right, gain, n_samples, counts, n_features)


def predict_tree(tree: Tree, record) -> np.ndarray:
    record = np.asarray(record, dtype=np.float64)
    if record.shape != (tree.n_features,):
        raise ArgumentError(f"record has {record.size} values, tree expects {tree.n_features}")
    if np.isnan(record).any():
        raise ArgumentError("record contains NaN")
    return tree.predict_proba(record[None, :])[0]


# ---------------------------------------------------------------- forests


@dataclass(frozen=True)
class ForestConfig:
    n_trees: int = 100
    bootstrap: bool = True
    features_per_split: int | str | None = "sqrt"
    split_mode: str = "exhaustive"
    max_depth: int | None = None
    min_samples_split: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ArgumentError("n_trees must be >= 1")
        if self.min_samples_split < 2:
            raise ArgumentError("min_samples_split must be >= 2")
        if self.split_mode not in ("exhaustive", "random_threshold"):
            raise ArgumentError(f"unknown split mode {self.split_mode!r}")
        if self.max_depth is not None and self.max_depth < 0:
            raise ArgumentError("max_depth must be >= 0")

    def resolve_features(self, n_features: int) -> int:
        k = self.features_per_split
        if k is None:
            return n_features
        if k == "sqrt":
            return max(1, int(math.sqrt(n_features)))
        if isinstance(k, str):
            raise ArgumentError(f"features_per_split must be an int, 'sqrt' or None, got {k!r}")
        if not 1 <= k <= n_features:
            raise ArgumentError(f"features_per_split={k} outside [1, {n_features}]")
        return int(k)

    def to_dict(self):
        return asdict(self)


RANDOM_FOREST_DEFAULTS = ForestConfig()
EXTRA_TREES_DEFAULTS = ForestConfig(bootstrap=False, split_mode="random_threshold")


def tree_rng(seed: int, index: int) -> np.random.Generator:
    """Generator for tree ``index``; depends only on (seed, index)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def _grow_one(X, y, n_labels, config: ForestConfig, k: int, index: int) -> Tree:
    rng = tree_rng(config.seed, index)
    n = X.shape[0]
    rows = rng.integers(0, n, size=n) if config.bootstrap else np.arange(n)
    tree_config = TreeConfig(config.max_depth, config.min_samples_split, k, config.split_mode)
    return fit_tree(rows, X, y, n_labels, tree_config, rng)


def fit_forest(X, y, n_labels, config: ForestConfig, n_jobs=1) -> list:
    """Fit ``config.n_trees`` trees; the result does not depend on ``n_jobs``."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        raise ArgumentError("cannot fit a forest on zero rows")
    k = config.resolve_features(X.shape[1])
    jobs = (delayed(_grow_one)(X, y, n_labels, config, k, t) for t in range(config.n_trees))
    return Parallel(n_jobs=n_jobs, prefer="threads")(jobs)


def vote_fractions(trees, X) -> np.ndarray:
    """Each tree votes for its argmax label (ties to the lowest index)."""
    X = np.asarray(X, dtype=np.float64)
    n_labels = trees[0].n_labels
    votes = np.zeros((X.shape[0], n_labels))
    rows = np.arange(X.shape[0])
    for tree in trees:
        votes[rows, np.argmax(tree.predict_proba(X), axis=1)] += 1.0
    return votes / len(trees)


def predict_forest(trees, record) -> np.ndarray:
    record = np.asarray(record, dtype=np.float64)
    if np.isnan(record).any():
        raise ArgumentError("record contains NaN")
    if record.shape != (trees[0].n_features,):
        raise ArgumentError(f"record has {record.size} values, forest expects {trees[0].n_features}")
    return vote_fractions(trees, record[None, :])[0]


def impurity_importances(trees) -> np.ndarray:
    """Mean over trees of weighted information gain per feature, normalized to 1."""
    total = np.mean([t.importances() for t in trees], axis=0)
    if not any((t.feature >= 0).any() for t in trees):
        raise NotEnoughSplitsError("no splits to attribute")
    return total / total.sum()


# ---------------------------------------------------------------- estimators


def _check_fit_input(X, y):
    X, y = check_X_y(X, y, dtype=np.float64)
    classes, y_enc = np.unique(y, return_inverse=True)
    return X, y_enc.astype(np.int64), classes


def _check_predict_input(est, X):
    check_is_fitted(est, "classes_")
    X = check_array(X, dtype=np.float64, ensure_all_finite=False, ensure_min_samples=0)
    if np.isnan(X).any():
        raise ArgumentError("X contains NaN")
    if X.shape[1] != est.n_features_in_:
        raise ArgumentError(f"X has {X.shape[1]} features, model was fit on {est.n_features_in_}")
    return X


class DecisionTreeClassifier(ClassifierMixin, BaseEstimator):
    """Single information-gain tree over all features with exhaustive splits.

    Parameters
    ----------
    max_depth : int or None
        Depth cap; None grows until leaves are pure or unsplittable.
    min_samples_split : int
        Smallest node that may still be split.
    """

    def __init__(self, max_depth=None, min_samples_split=2):
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split

    def fit(self, X, y):
        X, y_enc, self.classes_ = _check_fit_input(X, y)
        self.n_features_in_ = X.shape[1]
        config = TreeConfig(self.max_depth, self.min_samples_split, None, "exhaustive")
        self.tree_ = fit_tree(np.arange(X.shape[0]), X, y_enc, self.classes_.size, config)
        return self

    def predict_proba(self, X):
        return self.tree_.predict_proba(_check_predict_input(self, X))

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    @property
    def feature_importances_(self):
        check_is_fitted(self, "tree_")
        return impurity_importances([self.tree_])

    def get_state(self):
        return {
            "params": self.get_params(),
            "classes": self.classes_.tolist(),
            "tree": self.tree_.to_dict(),
        }

    @classmethod
    def from_state(cls, state):
        est = cls(**state["params"])
        est.classes_ = np.asarray(state["classes"])
        est.tree_ = Tree.from_dict(state["tree"])
        est.n_features_in_ = est.tree_.n_features
        return est


class _BaseForest(ClassifierMixin, BaseEstimator):
    def __init__(self, n_trees=100, bootstrap=True, features_per_split="sqrt",
                 split_mode="exhaustive", max_depth=None, min_samples_split=2,
                 seed=0, n_jobs=1):
        self.n_trees = n_trees
        self.bootstrap = bootstrap
        self.features_per_split = features_per_split
        self.split_mode = split_mode
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.seed = seed
        self.n_jobs = n_jobs

    @property
    def config(self) -> ForestConfig:
        return ForestConfig(self.n_trees, self.bootstrap, self.features_per_split,
                            self.split_mode, self.max_depth, self.min_samples_split, self.seed)

    def fit(self, X, y):
        X, y_enc, self.classes_ = _check_fit_input(X, y)
        self.n_features_in_ = X.shape[1]
        self.trees_ = fit_forest(X, y_enc, self.classes_.size, self.config, self.n_jobs)
        return self

    def predict_proba(self, X):
        """Fraction of trees voting for each class (sums to 1 per row)."""
        return vote_fractions(self.trees_, _check_predict_input(self, X))

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_proba(X), axis=1)]

    @property
    def feature_importances_(self):
        check_is_fitted(self, "trees_")
        return impurity_importances(self.trees_)

    def get_state(self):
        params = self.get_params()
        params.pop("n_jobs")
        return {
            "params": params,
            "classes": self.classes_.tolist(),
            "trees": [t.to_dict() for t in self.trees_],
        }

    @classmethod
    def from_state(cls, state):
        est = cls(**state["params"])
        est.classes_ = np.asarray(state["classes"])
        est.trees_ = [Tree.from_dict(t) for t in state["trees"]]
        est.n_features_in_ = est.trees_[0].n_features
        return est


class RandomForestClassifier(_BaseForest):
    """Bagged entropy trees with a random feature subset at every node."""


class ExtraTreesClassifier(_BaseForest):
    """Extremely randomized trees: all rows, one random threshold per feature."""

    def __init__(self, n_trees=100, bootstrap=False, features_per_split="sqrt",
                 split_mode="random_threshold", max_depth=None, min_samples_split=2,
                 seed=0, n_jobs=1):
        super().__init__(n_trees, bootstrap, features_per_split, split_mode,
                         max_depth, min_samples_split, seed, n_jobs)
