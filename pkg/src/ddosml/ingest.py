"""Flow-record CSV ingestion: parsing, cleaning, label encoding, splitting
and z-score standardization.

The CSV dialect is the one produced by CICFlowMeter exports such as
CICDDoS2019: a header row (often with stray leading spaces), one row per
flow, a ``Label`` column, and literal ``Infinity``/``NaN`` cells in some
rate columns.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import IO, Iterable, Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import ArgumentError, ColumnError, RowError, SchemaError, UnknownLabelError

LABEL_COLUMN = "Label"

NONFINITE_TOKENS = {"Infinity": math.inf, "-Infinity": -math.inf, "NaN": math.nan}

# Columns that identify a flow rather than describe it.
IDENTIFIER_FEATURES = (
    "Unnamed: 0",
    "Flow ID",
    "Source IP",
    "Destination IP",
    "Timestamp",
    "SimillarHTTP",
)

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a_64(text: str) -> int:
    """64-bit FNV-1a hash of the UTF-8 bytes of ``text``."""
    h = FNV64_OFFSET
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * FNV64_PRIME) & _MASK64
    return h


def hash_text(text: str) -> float:
    """Stable real-valued code for a text cell (FNV-1a folded mod 2**32)."""
    return float(fnv1a_64(text.strip()) % (1 << 32))


_TIMESTAMP_FORMATS = (
    "%Y-%m-%d %H:%M:%S.%f",
    "%Y-%m-%d %H:%M:%S",
    "%d/%m/%Y %H:%M:%S",
    "%d/%m/%Y %H:%M",
    "%m/%d/%Y %I:%M:%S %p",
)


def timestamp_seconds(text: str) -> float:
    """Seconds since the epoch for a flow timestamp (naive times read as UTC),
    falling back to :func:`hash_text` when no known format matches."""
    text = text.strip()
    try:
        parsed = datetime.fromisoformat(text)
    except ValueError:
        parsed = None
        for fmt in _TIMESTAMP_FORMATS:
            try:
                parsed = datetime.strptime(text, fmt)
                break
            except ValueError:
                continue
    if parsed is None:
        return hash_text(text)
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=timezone.utc)
    return parsed.timestamp()


@dataclass(frozen=True)
class ColumnSchema:
    names: tuple
    label_column: str | None = LABEL_COLUMN
    numeric_mask: tuple = ()

    def __post_init__(self):
        names = tuple(n.strip() for n in self.names)
        object.__setattr__(self, "names", names)
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise SchemaError(f"duplicate column names after trimming: {dupes}")
        if self.label_column is not None and self.label_column not in names:
            raise SchemaError(f"label column {self.label_column!r} not in header")
        if not self.numeric_mask:
            object.__setattr__(self, "numeric_mask", (True,) * len(names))
        elif len(self.numeric_mask) != len(names):
            raise SchemaError("numeric_mask length differs from column count")


@dataclass(frozen=True)
class LabelDictionary:
    """Canonical label names (position = label index) plus spelling aliases."""

    names: tuple
    aliases: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "aliases", dict(self.aliases))
        if len(set(self.names)) != len(self.names):
            raise ArgumentError("canonical label names must be unique")
        unknown = {v for v in self.aliases.values() if v not in self.names}
        if unknown:
            raise ArgumentError(f"aliases point to unknown labels: {sorted(unknown)}")

    def __len__(self):
        return len(self.names)

    @property
    def entries(self) -> dict:
        out = {name: i for i, name in enumerate(self.names)}
        for alias, target in self.aliases.items():
            out.setdefault(alias, out[target])
        return out

    def resolve(self, text: str) -> str | None:
        text = text.strip()
        if text in self.names:
            return text
        return self.aliases.get(text)

    def index(self, text: str) -> int | None:
        name = self.resolve(text)
        return None if name is None else self.names.index(name)

    @classmethod
    def from_labels(cls, labels: Iterable[str], aliases=None):
        aliases = dict(aliases or {})
        canon = set()
        for text in labels:
            text = text.strip()
            canon.add(aliases.get(text, text))
        return cls(tuple(sorted(canon)), {a: t for a, t in aliases.items() if t in canon})

    def to_dict(self):
        return {"names": list(self.names), "aliases": dict(sorted(self.aliases.items()))}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["names"]), d.get("aliases", {}))


CICDDOS2019_LABELS = LabelDictionary(
    ("BENIGN", "DDoS_LDAP", "DDoS_MSSQL"),
    {
        "LDAP": "DDoS_LDAP",
        "MSSQL": "DDoS_MSSQL",
        "DrDoS_LDAP": "DDoS_LDAP",
        "DrDoS_MSSQL": "DDoS_MSSQL",
    },
)


@dataclass(frozen=True)
class LabeledDataset:
    """Flows as a dense float64 matrix plus integer labels.

    ``text_columns`` holds raw cells of text-like columns between parsing and
    cleaning (their matrix columns are NaN until then). ``raw_labels`` keeps
    the label text so the dataset can be re-encoded against another
    dictionary.
    """

    features: np.ndarray
    labels: np.ndarray
    feature_names: tuple
    label_dict: LabelDictionary
    provenance: str = ""
    text_columns: Mapping[str, tuple] = field(default_factory=dict)
    raw_labels: tuple | None = None
    cleaning_log: tuple = ()

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim != 2:
            features = features.reshape(len(self.labels), -1)
        labels = np.asarray(self.labels, dtype=np.int64)
        if features.shape[0] != labels.shape[0]:
            raise SchemaError(
                f"{features.shape[0]} feature rows but {labels.shape[0]} labels"
            )
        if features.shape[1] != len(self.feature_names):
            raise SchemaError("feature_names length differs from matrix width")
        if labels.size and (labels.min() < 0 or labels.max() >= len(self.label_dict)):
            raise SchemaError("label index outside the label dictionary")
        features.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    def label_counts(self) -> dict:
        counts = np.bincount(self.labels, minlength=len(self.label_dict))
        return {name: int(c) for name, c in zip(self.label_dict.names, counts)}

    def take(self, rows) -> "LabeledDataset":
        rows = np.asarray(rows, dtype=np.int64)
        return replace(
            self,
            features=self.features[rows],
            labels=self.labels[rows],
            text_columns={k: tuple(v[i] for i in rows) for k, v in self.text_columns.items()},
            raw_labels=None if self.raw_labels is None else tuple(self.raw_labels[i] for i in rows),
        )


# ---------------------------------------------------------------- parsing


def _open_text(source) -> IO[str]:
    if isinstance(source, (str, os.PathLike)):
        return open(source, "r", encoding="utf-8-sig", newline="")
    if isinstance(source, io.TextIOBase):
        return source
    return io.TextIOWrapper(source, encoding="utf-8-sig", newline="")


def _parse_numeric(cells: Sequence[str]) -> np.ndarray | None:
    """Parse a column as float64, or return None when it is text-like.

    Empty cells read as NaN. Non-finite values are only accepted when spelled
    exactly as one of NONFINITE_TOKENS.
    """
    stripped = [c.strip() for c in cells]
    try:
        values = np.array([c if c else "NaN" for c in stripped], dtype=np.float64)
    except ValueError:
        return None
    for i in np.flatnonzero(~np.isfinite(values)):
        tok = stripped[i]
        if tok and tok not in NONFINITE_TOKENS:
            return None
    return values


def parse_flow_csv(
    source,
    schema: ColumnSchema | str = "infer",
    *,
    label_dict: LabelDictionary | None = None,
    require_label: bool = True,
    force_text: Iterable[str] = (),
) -> LabeledDataset:
    """Read a flow CSV into a raw (pre-clean) :class:`LabeledDataset`.

    Labels are encoded with ``label_dict`` when given, otherwise with a
    dictionary of the sorted distinct label texts. Columns listed in
    ``force_text`` are kept as text even if every cell parses as a number.
    With ``require_label=False`` a missing label column is allowed and every
    row gets label 0 of a one-entry dictionary.
    """
    force_text = {n.strip() for n in force_text}
    fh = _open_text(source)
    try:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or not any(h.strip() for h in header):
            raise SchemaError("missing header row")
        names = [h.strip() for h in header]
        if isinstance(schema, ColumnSchema):
            if tuple(names) != schema.names:
                raise SchemaError("header does not match the supplied schema")
            label_column = schema.label_column
            numeric_mask = schema.numeric_mask
        elif schema == "infer":
            label_column = LABEL_COLUMN if (require_label or LABEL_COLUMN in names) else None
            schema = ColumnSchema(tuple(names), label_column)
            numeric_mask = None
        else:
            raise ArgumentError(f"schema must be a ColumnSchema or 'infer', got {schema!r}")
        width = len(names)
        rows = []
        for row in reader:
            if len(row) != width:
                if not row:
                    continue
                raise RowError(reader.line_num, f"{len(row)} cells, header has {width}")
            rows.append(row)
    finally:
        if fh is not source:
            fh.close()

    columns = list(zip(*rows)) if rows else [()] * width
    label_idx = names.index(label_column) if label_column is not None else None
    feature_names = []
    matrix_cols = []
    text_columns = {}
    for j, name in enumerate(names):
        if j == label_idx:
            continue
        cells = columns[j]
        feature_names.append(name)
        values = None
        wants_numeric = numeric_mask is None or numeric_mask[j]
        if wants_numeric and name not in force_text:
            values = _parse_numeric(cells)
            if values is None and numeric_mask is not None:
                raise SchemaError(f"column {name!r} declared numeric holds text")
        if values is None:
            text_columns[name] = tuple(c.strip() for c in cells)
            values = np.full(len(cells), np.nan)
        matrix_cols.append(values)

    n = len(rows)
    features = np.column_stack(matrix_cols) if matrix_cols else np.empty((n, 0))
    features = features.reshape(n, len(feature_names))
    if label_idx is not None:
        raw_labels = tuple(c.strip() for c in columns[label_idx])
        if label_dict is None:
            label_dict = LabelDictionary.from_labels(raw_labels)
        labels = encode_labels(raw_labels, label_dict)
    else:
        raw_labels = None
        label_dict = label_dict or LabelDictionary(("UNLABELED",))
        labels = [0] * n
    return LabeledDataset(
        features=features,
        labels=np.asarray(labels, dtype=np.int64),
        feature_names=tuple(feature_names),
        label_dict=label_dict,
        provenance=f"parsed {getattr(source, 'name', source)!s}: {n} rows",
        text_columns=text_columns,
        raw_labels=raw_labels,
    )


def concat_datasets(parts: Sequence[LabeledDataset]) -> LabeledDataset:
    if not parts:
        raise ArgumentError("nothing to concatenate")
    first = parts[0]
    for p in parts[1:]:
        if p.feature_names != first.feature_names:
            raise SchemaError("input files have different feature columns")
        if set(p.text_columns) != set(first.text_columns):
            raise SchemaError("input files disagree on which columns are text")
        if p.label_dict != first.label_dict:
            raise SchemaError("input files were encoded with different label dictionaries")
    raw = None
    if all(p.raw_labels is not None for p in parts):
        raw = tuple(t for p in parts for t in p.raw_labels)
    return LabeledDataset(
        features=np.vstack([p.features for p in parts]),
        labels=np.concatenate([p.labels for p in parts]),
        feature_names=first.feature_names,
        label_dict=first.label_dict,
        provenance="; ".join(p.provenance for p in parts),
        text_columns={k: tuple(c for p in parts for c in p.text_columns[k]) for k in first.text_columns},
        raw_labels=raw,
    )


# ---------------------------------------------------------------- cleaning


@dataclass(frozen=True)
class CleaningPolicy:
    nonfinite: str = "zero"  # "zero" | "drop"
    timestamp: str = "hash"  # "hash" | "epoch"
    duplicates: str = "keep"  # "keep" | "drop"
    exclude_identifiers: bool = False

    def __post_init__(self):
        if self.nonfinite not in ("zero", "drop"):
            raise ArgumentError(f"nonfinite policy must be 'zero' or 'drop', got {self.nonfinite!r}")
        if self.timestamp not in ("hash", "epoch"):
            raise ArgumentError(f"timestamp policy must be 'hash' or 'epoch', got {self.timestamp!r}")
        if self.duplicates not in ("keep", "drop"):
            raise ArgumentError(f"duplicates policy must be 'keep' or 'drop', got {self.duplicates!r}")

    def to_dict(self):
        return {
            "nonfinite": self.nonfinite,
            "timestamp": self.timestamp,
            "duplicates": self.duplicates,
            "exclude_identifiers": self.exclude_identifiers,
        }


def clean_dataset(raw: LabeledDataset, policy: CleaningPolicy = CleaningPolicy()) -> LabeledDataset:
    """Return a dataset with every cell finite and every column numeric.

    Text columns are encoded (hash, or epoch seconds for ``Timestamp`` when
    asked), then non-finite cells are zeroed or their rows dropped. The
    per-column counts end up in ``cleaning_log`` as ``{column, replaced,
    rule}`` records.
    """
    log = []
    names = list(raw.feature_names)
    keep_cols = list(range(len(names)))
    if policy.exclude_identifiers:
        keep_cols = [j for j in keep_cols if names[j] not in IDENTIFIER_FEATURES]
        for j in range(len(names)):
            if names[j] in IDENTIFIER_FEATURES:
                log.append({"column": names[j], "replaced": 0, "rule": "excluded-identifier"})
    features = np.array(raw.features[:, keep_cols], dtype=np.float64)
    names = [names[j] for j in keep_cols]

    for j, name in enumerate(names):
        cells = raw.text_columns.get(name)
        if cells is None:
            continue
        if cells and not any(cells):
            raise ColumnError(name, "no parseable or encodable cell")
        if name == "Timestamp" and policy.timestamp == "epoch":
            encode, rule = timestamp_seconds, "text->epoch-seconds"
        else:
            encode, rule = hash_text, "text->fnv1a64-mod-2^32"
        col = features[:, j]
        cache = {}
        encoded = 0
        for i, text in enumerate(cells):
            if not text:
                col[i] = np.nan
                continue
            if text not in cache:
                cache[text] = encode(text)
            col[i] = cache[text]
            encoded += 1
        log.append({"column": name, "replaced": encoded, "rule": rule})

    bad = ~np.isfinite(features)
    keep_rows = np.arange(features.shape[0])
    if bad.any():
        per_col = bad.sum(axis=0)
        rule = "nonfinite->0" if policy.nonfinite == "zero" else "nonfinite->drop-row"
        for j in np.flatnonzero(per_col):
            log.append({"column": names[j], "replaced": int(per_col[j]), "rule": rule})
        if policy.nonfinite == "zero":
            features[bad] = 0.0
        else:
            keep_rows = np.flatnonzero(~bad.any(axis=1))

    if policy.duplicates == "drop" and keep_rows.size:
        block = np.column_stack([features[keep_rows], raw.labels[keep_rows]])
        _, first = np.unique(block, axis=0, return_index=True)
        first.sort()
        dropped = keep_rows.size - first.size
        keep_rows = keep_rows[first]
        log.append({"column": "*", "replaced": int(dropped), "rule": "duplicate->drop"})

    out = LabeledDataset(
        features=features[keep_rows],
        labels=raw.labels[keep_rows],
        feature_names=tuple(names),
        label_dict=raw.label_dict,
        provenance=raw.provenance + f"; cleaned: {keep_rows.size} rows kept",
        raw_labels=None if raw.raw_labels is None else tuple(raw.raw_labels[i] for i in keep_rows),
        cleaning_log=tuple(log),
    )
    return out


def write_cleaning_log(log: Iterable[Mapping], fh: IO[str]) -> None:
    for entry in log:
        fh.write(json.dumps(entry, sort_keys=True) + "\n")


def write_dataset_csv(data: LabeledDataset, fh: IO[str]) -> None:
    """Emit a cleaned dataset in the dialect :func:`parse_flow_csv` reads."""
    if data.text_columns:
        raise ArgumentError("dataset still has uncleaned text columns")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(list(data.feature_names) + [LABEL_COLUMN])
    names = data.label_dict.names
    for row, label in zip(data.features.tolist(), data.labels.tolist()):
        writer.writerow([repr(v) for v in row] + [names[label]])


# ---------------------------------------------------------------- labels


def encode_labels(raw_labels: Sequence[str], label_dict: LabelDictionary) -> list:
    """Map label texts (aliases resolved) to dictionary indices."""
    out = []
    lookup = label_dict.entries
    for row, text in enumerate(raw_labels):
        idx = lookup.get(text.strip())
        if idx is None:
            raise UnknownLabelError(text, row)
        out.append(idx)
    return out


def relabel(data: LabeledDataset, label_dict: LabelDictionary) -> LabeledDataset:
    if data.raw_labels is None:
        raise ArgumentError("dataset has no raw label text to re-encode")
    return replace(data, labels=np.asarray(encode_labels(data.raw_labels, label_dict), dtype=np.int64),
                   label_dict=label_dict)


# ---------------------------------------------------------------- splitting


def _round_half_away(x: float) -> int:
    return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)


def split_indices(labels, test_fraction: float, seed: int):
    """Row indices of a stratified split as ``(train_idx, test_idx)``.

    A seeded permutation of all rows is walked once; each row goes to test
    while its label's quota is unfilled. Both index arrays are therefore in
    shuffled order.
    """
    if not 0.0 <= test_fraction <= 1.0:
        raise ArgumentError(f"test_fraction must lie in [0, 1], got {test_fraction}")
    labels = np.asarray(labels, dtype=np.int64)
    n_labels = int(labels.max()) + 1 if labels.size else 0
    counts = np.bincount(labels, minlength=n_labels)
    quota = np.array([_round_half_away(test_fraction * n) for n in counts], dtype=np.int64)
    if test_fraction > 0:
        quota[(counts >= 2) & (quota < 1)] = 1
    quota = np.minimum(quota, counts)
    perm = np.random.default_rng(seed).permutation(labels.size)
    in_test = np.zeros(labels.size, dtype=bool)
    taken = np.zeros_like(quota)
    for pos, row in enumerate(perm):
        lab = labels[row]
        if taken[lab] < quota[lab]:
            taken[lab] += 1
            in_test[pos] = True
    return perm[~in_test], perm[in_test]


def stratified_split(data: LabeledDataset, test_fraction: float = 0.3, seed: int = 0):
    train_idx, test_idx = split_indices(data.labels, test_fraction, seed)
    return data.take(train_idx), data.take(test_idx)


# ---------------------------------------------------------------- scaling


class Standardizer(TransformerMixin, BaseEstimator):
    """Z-score scaling with population standard deviation.

    Columns with zero spread transform to 0 instead of dividing by zero.
    """

    def __init__(self, feature_names=None):
        self.feature_names = feature_names

    def fit(self, X, y=None):
        X = check_array(X, dtype=np.float64, ensure_min_samples=1)
        self.mean_ = X.mean(axis=0)
        self.scale_ = X.std(axis=0)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = check_array(X, dtype=np.float64, ensure_min_samples=0)
        if X.shape[1] != self.n_features_in_:
            raise SchemaError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        constant = self.scale_ == 0
        out = (X - self.mean_) / np.where(constant, 1.0, self.scale_)
        out[:, constant] = 0.0
        return out

    @property
    def fitted_on(self) -> tuple:
        return tuple(self.feature_names or ())

    def subset(self, names: Sequence[str]) -> "Standardizer":
        """Standardizer restricted to ``names`` (a subset of ``fitted_on``)."""
        pos = [self.fitted_on.index(n) for n in names]
        out = Standardizer(feature_names=tuple(names))
        out.mean_ = self.mean_[pos]
        out.scale_ = self.scale_[pos]
        out.n_features_in_ = len(pos)
        return out

    def to_dict(self):
        check_is_fitted(self, "mean_")
        return {
            "feature_names": list(self.fitted_on),
            "means": self.mean_.tolist(),
            "stddevs": self.scale_.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        out = cls(feature_names=tuple(d["feature_names"]))
        out.mean_ = np.asarray(d["means"], dtype=np.float64)
        out.scale_ = np.asarray(d["stddevs"], dtype=np.float64)
        out.n_features_in_ = out.mean_.size
        return out


def fit_standardizer(train: LabeledDataset) -> Standardizer:
    if train.n_rows == 0:
        raise ArgumentError("cannot fit a standardizer on zero rows")
    return Standardizer(feature_names=train.feature_names).fit(train.features)


def apply_standardizer(s: Standardizer, data: LabeledDataset) -> LabeledDataset:
    if data.feature_names != s.fitted_on:
        missing = [n for n in s.fitted_on if n not in data.feature_names]
        raise SchemaError(f"feature names differ from the fitted ones; missing {missing}")
    return replace(data, features=s.transform(data.features))
