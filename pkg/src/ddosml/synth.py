"""Class-conditional Gaussian flow data for dataset-free runs.

A spec looks like::

    {"n_features": 5,
     "labels": {"A": {"count": 1000, "mean": -3.0, "variance": 1.0},
                "B": {"count": 1000, "mean": [3, 3, 3, 3, 3], "variance": 1.0}}}

``mean`` and ``variance`` are scalars or per-feature lists.
"""

from __future__ import annotations

import csv
import io

import numpy as np

from .exceptions import ArgumentError
from .ingest import LABEL_COLUMN

# Class totals of the full CICDDoS2019 BENIGN/LDAP/MSSQL subset.
CICDDOS2019_LABEL_COUNTS = {"BENIGN": 2794, "DDoS_LDAP": 9931, "DDoS_MSSQL": 5763061}


def scaled_counts(counts: dict, scale: float) -> dict:
    """Counts multiplied by ``scale``, rounded half away from zero, floor 1."""
    return {k: max(1, int(np.floor(v * scale + 0.5))) for k, v in counts.items()}


def _per_feature(value, n_features, what, label):
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = np.full(n_features, float(arr))
    if arr.shape != (n_features,):
        raise ArgumentError(f"label {label!r}: {what} needs {n_features} values")
    return arr


def generate_synthetic(spec: dict, seed: int = 0):
    """Draw rows; returns ``(features, label_names_per_row, feature_names)``.

    Rows are drawn label by label in spec order, then shuffled with the same
    seeded generator.
    """
    labels = spec.get("labels")
    if not isinstance(labels, dict) or len(labels) < 2:
        raise ArgumentError("synthetic spec needs at least 2 labels")
    n_features = int(spec.get("n_features", 0))
    if n_features < 1:
        raise ArgumentError("n_features must be >= 1")
    rng = np.random.default_rng(seed)
    blocks, names = [], []
    for label, params in labels.items():
        count = int(params.get("count", 0))
        if count < 0:
            raise ArgumentError(f"label {label!r}: negative count")
        mean = _per_feature(params.get("mean", 0.0), n_features, "mean", label)
        var = _per_feature(params.get("variance", 1.0), n_features, "variance", label)
        if (var <= 0).any():
            raise ArgumentError(f"label {label!r}: variances must be positive")
        blocks.append(rng.normal(mean, np.sqrt(var), size=(count, n_features)))
        names.extend([label] * count)
    X = np.vstack(blocks)
    perm = rng.permutation(X.shape[0])
    feature_names = tuple(spec.get("feature_names") or (f"f{i}" for i in range(n_features)))
    return X[perm], [names[i] for i in perm], feature_names


def synthetic_csv(spec: dict, seed: int = 0) -> str:
    X, labels, feature_names = generate_synthetic(spec, seed)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(list(feature_names) + [LABEL_COLUMN])
    for row, label in zip(X.tolist(), labels):
        writer.writerow([repr(v) for v in row] + [label])
    return buf.getvalue()
