import io

import numpy as np
import pytest

from cicflow import flow_csv
from ddosml.exceptions import ArgumentError, SchemaError
from ddosml.feature_select import (
    ExtraTreesSelector,
    FeatureMask,
    ImportanceRanking,
    project,
    rank_features,
    ranking_from_importances,
    select_top_k,
)
from ddosml.ingest import (
    CleaningPolicy,
    LabelDictionary,
    LabeledDataset,
    apply_standardizer,
    clean_dataset,
    fit_standardizer,
    parse_flow_csv,
)
from ddosml.trees import ForestConfig

SMALL = ForestConfig(n_trees=30, bootstrap=False, split_mode="random_threshold")


def _separable(n=400, noise_cols=5, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, size=n)
    signal = y * 10.0 + rng.normal(0, 0.1, size=n)
    X = np.column_stack([rng.normal(size=(n, noise_cols)), signal])
    names = tuple(f"noise{i}" for i in range(noise_cols)) + ("signal",)
    return LabeledDataset(X, y, names, LabelDictionary(("A", "B")))


def test_separating_feature_ranks_first():
    ranking = rank_features(_separable(), SMALL)
    assert ranking.names[0] == "signal"
    assert ranking.importances[0] > 0.9
    assert ranking.importances.sum() == pytest.approx(1.0, abs=1e-12)
    assert (np.diff(ranking.importances) <= 0).all()


def test_duplicate_column_shares_the_importance():
    data = _separable(noise_cols=3)
    X = np.column_stack([data.features, data.features[:, -1]])
    dup = LabeledDataset(X, data.labels, data.feature_names + ("signal_copy",), data.label_dict)
    ranking = rank_features(dup, SMALL)
    assert set(ranking.names[:2]) == {"signal", "signal_copy"}
    assert ranking.importances[:2].sum() > 0.9


def test_single_label_rejected():
    data = LabeledDataset(np.ones((4, 2)), [0, 0, 0, 0], ("a", "b"), LabelDictionary(("A", "B")))
    with pytest.raises(ArgumentError, match="discriminative"):
        rank_features(data, SMALL)


def test_seed_controls_ranking():
    data = _separable()
    a = rank_features(data, SMALL, seed=3)
    b = rank_features(data, SMALL, seed=3)
    assert a.entries == b.entries
    assert a.metadata["seed"] == 3


def test_ties_keep_column_order():
    ranking = ranking_from_importances(("a", "b", "c", "d"), [0.2, 0.4, 0.2, 0.2])
    assert ranking.names == ("b", "a", "c", "d")


def test_top_k_is_prefix_and_indices_match():
    ranking = ranking_from_importances(("a", "b", "c", "d"), [0.1, 0.4, 0.3, 0.2])
    mask = select_top_k(ranking, 2, ("a", "b", "c", "d"))
    assert mask.names == ("b", "c") and mask.indices == (1, 2)
    for k in range(1, 5):
        assert select_top_k(ranking, k).names == ranking.names[:k]
    with pytest.raises(ArgumentError):
        select_top_k(ranking, 0)
    with pytest.raises(ArgumentError):
        select_top_k(ranking, 5)


def test_project_is_idempotent_and_checks_names():
    data = _separable(noise_cols=2)
    mask = FeatureMask(("signal", "noise0"), (2, 0))
    once = project(data, mask)
    assert once.feature_names == ("signal", "noise0")
    np.testing.assert_array_equal(once.features, data.features[:, [2, 0]])
    twice = project(once, mask)
    np.testing.assert_array_equal(twice.features, once.features)
    with pytest.raises(SchemaError):
        project(data, FeatureMask(("ghost",), (0,)))


def test_ranking_serialization():
    ranking = ranking_from_importances(("a", "b"), [0.25, 0.75], {"seed": 1})
    assert ImportanceRanking.from_dict(ranking.to_dict()) == ranking
    buf = io.StringIO()
    ranking.write_csv(buf)
    assert buf.getvalue() == "name,importance\nb,0.75\na,0.25\n"


def test_identifier_exclusion_removes_them_from_ranking():
    raw = parse_flow_csv(io.BytesIO(flow_csv({"BENIGN": 40, "LDAP": 40, "MSSQL": 40}).encode()))
    data = clean_dataset(raw, CleaningPolicy(exclude_identifiers=True))
    data = apply_standardizer(fit_standardizer(data), data)
    ranking = rank_features(data, SMALL)
    assert not {"Flow ID", "Source IP", "Destination IP", "Timestamp"} & set(ranking.names)
    assert len(ranking) == len(data.feature_names)


def test_selector_transformer():
    data = _separable()
    sel = ExtraTreesSelector(k=2, n_trees=20).fit(data.features, data.labels, data.feature_names)
    out = sel.transform(data.features)
    assert out.shape == (data.n_rows, 2)
    assert sel.get_feature_names_out()[0] == "signal"
    np.testing.assert_array_equal(out[:, 0], data.features[:, -1])
