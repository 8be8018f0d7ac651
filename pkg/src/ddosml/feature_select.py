"""Extra-trees importance ranking and top-k feature projection."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import IO

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import ArgumentError, SchemaError
from .ingest import LabelDictionary, LabeledDataset
from .trees import EXTRA_TREES_DEFAULTS, ForestConfig, fit_forest, impurity_importances

DEFAULT_K = 20


@dataclass(frozen=True)
class ImportanceRanking:
    """(name, importance) pairs, descending; equal scores keep column order."""

    entries: tuple
    metadata: dict = field(default_factory=dict)

    @property
    def names(self) -> tuple:
        return tuple(name for name, _ in self.entries)

    @property
    def importances(self) -> np.ndarray:
        return np.array([imp for _, imp in self.entries])

    def __len__(self):
        return len(self.entries)

    def to_dict(self):
        return {
            "entries": [{"name": n, "importance": float(v)} for n, v in self.entries],
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(tuple((e["name"], e["importance"]) for e in d["entries"]), d.get("metadata", {}))

    def write_csv(self, fh: IO[str]) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["name", "importance"])
        for name, imp in self.entries:
            writer.writerow([name, repr(float(imp))])


@dataclass(frozen=True)
class FeatureMask:
    names: tuple
    indices: tuple

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        if len(set(self.names)) != len(self.names):
            raise ArgumentError("feature mask has duplicate names")
        if len(self.names) != len(self.indices):
            raise ArgumentError("feature mask names and indices differ in length")

    def to_dict(self):
        return {"names": list(self.names), "indices": list(self.indices)}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["names"]), tuple(d["indices"]))


def ranking_from_importances(names, importances, metadata=None) -> ImportanceRanking:
    importances = np.asarray(importances, dtype=np.float64)
    # Stable sort on the negated scores keeps column order among ties.
    order = np.argsort(-importances, kind="stable")
    return ImportanceRanking(
        tuple((names[i], float(importances[i])) for i in order), dict(metadata or {})
    )


def rank_features(data: LabeledDataset, config: ForestConfig = EXTRA_TREES_DEFAULTS,
                  seed: int | None = None, n_jobs=1) -> ImportanceRanking:
    """Rank ``data``'s columns by extra-trees impurity importance.

    ``seed`` overrides ``config.seed`` when given. The caller standardizes
    first.
    """
    if seed is not None:
        config = replace(config, seed=seed)
    if data.n_rows < 2:
        raise ArgumentError("ranking needs at least 2 rows")
    present = np.unique(data.labels)
    if present.size < 2:
        raise ArgumentError("no discriminative signal: only one label present")
    _, y = np.unique(data.labels, return_inverse=True)
    trees = fit_forest(data.features, y, present.size, config, n_jobs)
    meta = {"config": config.to_dict(), "seed": config.seed}
    return ranking_from_importances(data.feature_names, impurity_importances(trees), meta)


def select_top_k(ranking: ImportanceRanking, k: int, feature_names=None) -> FeatureMask:
    """First ``k`` ranked features. ``feature_names`` (the dataset's column
    order) supplies the original indices; without it indices are ranks."""
    if not 1 <= k <= len(ranking):
        raise ArgumentError(f"k={k} outside [1, {len(ranking)}]")
    names = ranking.names[:k]
    if feature_names is None:
        return FeatureMask(names, range(k))
    feature_names = tuple(feature_names)
    return FeatureMask(names, [feature_names.index(n) for n in names])


def project(data: LabeledDataset, mask: FeatureMask) -> LabeledDataset:
    missing = [n for n in mask.names if n not in data.feature_names]
    if missing:
        raise SchemaError(f"features not in dataset: {missing}")
    cols = [data.feature_names.index(n) for n in mask.names]
    return replace(data, features=data.features[:, cols], feature_names=mask.names)


class ExtraTreesSelector(TransformerMixin, BaseEstimator):
    """Keep the ``k`` columns with the highest extra-trees importance.

    ``fit`` needs labels; ``transform`` returns the selected columns in
    ranking order.
    """

    def __init__(self, k=DEFAULT_K, n_trees=100, features_per_split="sqrt",
                 max_depth=None, seed=0, n_jobs=1):
        self.k = k
        self.n_trees = n_trees
        self.features_per_split = features_per_split
        self.max_depth = max_depth
        self.seed = seed
        self.n_jobs = n_jobs

    def fit(self, X, y, feature_names=None):
        X = check_array(X, dtype=np.float64)
        if feature_names is None:
            feature_names = tuple(f"x{i}" for i in range(X.shape[1]))
        present = np.unique(y)
        _, y_enc = np.unique(y, return_inverse=True)
        data = LabeledDataset(X, y_enc, feature_names,
                              LabelDictionary(tuple(str(c) for c in present)))
        config = replace(EXTRA_TREES_DEFAULTS, n_trees=self.n_trees,
                         features_per_split=self.features_per_split,
                         max_depth=self.max_depth, seed=self.seed)
        self.ranking_ = rank_features(data, config, n_jobs=self.n_jobs)
        self.mask_ = select_top_k(self.ranking_, min(self.k, X.shape[1]), feature_names)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mask_")
        X = check_array(X, dtype=np.float64, ensure_min_samples=0)
        return X[:, list(self.mask_.indices)]

    def get_feature_names_out(self, input_features=None):
        check_is_fitted(self, "mask_")
        return np.asarray(self.mask_.names, dtype=object)
