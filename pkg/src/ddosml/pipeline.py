"""prepare -> train -> evaluate / predict orchestration over files on disk.

``prepare`` writes a directory holding the standardized, projected train and
test splits plus everything needed to reproduce them::

    manifest.json        config, label dictionary, row counts, cleaning log
    train.csv, test.csv  selected features (standardized) + Label
    standardizer.json    train-split statistics for every candidate feature
    mask.json            selected feature names in ranking order
    ranking.csv/.json    extra-trees importances of all candidate features
    cleaning_log.jsonl   one {column, replaced, rule} record per line
"""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import random
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .artifact import MODEL_KINDS, ModelArtifact, atomic_write_text, canonical_json, load_json, reproducible_timestamp
from .evaluation import build_report, predictions_from_scores, report_json
from .exceptions import ArgumentError, SchemaError
from .feature_select import DEFAULT_K, FeatureMask, project, rank_features, select_top_k
from .ingest import (
    CICDDOS2019_LABELS,
    LABEL_COLUMN,
    CleaningPolicy,
    LabelDictionary,
    LabeledDataset,
    Standardizer,
    apply_standardizer,
    clean_dataset,
    concat_datasets,
    fit_standardizer,
    parse_flow_csv,
    relabel,
    stratified_split,
    write_cleaning_log,
    write_dataset_csv,
)
from .trees import EXTRA_TREES_DEFAULTS

log = logging.getLogger(__name__)

PREPARED_FORMAT = 1


@contextmanager
def stage(name: str):
    """Tag any exception escaping the block with the pipeline stage name."""
    try:
        yield
    except Exception as exc:
        if not hasattr(exc, "stage"):
            exc.stage = name
        raise


@dataclass(frozen=True)
class PipelineConfig:
    inputs: tuple
    out: str
    label_dict: LabelDictionary | None = None
    unknown_labels: str = "error"  # "error" | "drop"
    policy: CleaningPolicy = CleaningPolicy()
    test_fraction: float = 0.3
    seed: int = 0
    k: int = DEFAULT_K
    selector_trees: int = EXTRA_TREES_DEFAULTS.n_trees
    n_jobs: int = 1

    def __post_init__(self):
        if not 0.0 <= self.test_fraction <= 1.0:
            raise ArgumentError(f"test_fraction must lie in [0, 1], got {self.test_fraction}")
        if self.k < 1:
            raise ArgumentError("k must be >= 1")
        if self.unknown_labels not in ("error", "drop"):
            raise ArgumentError("unknown_labels must be 'error' or 'drop'")
        if not self.inputs:
            raise ArgumentError("at least one input CSV is required")

    def to_dict(self):
        return {
            "inputs": [str(p) for p in self.inputs],
            "label_dict": None if self.label_dict is None else self.label_dict.to_dict(),
            "unknown_labels": self.unknown_labels,
            "cleaning_policy": self.policy.to_dict(),
            "test_fraction": self.test_fraction,
            "seed": self.seed,
            "k": self.k,
            "selector_trees": self.selector_trees,
        }


def _file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _csv_text(write, data) -> str:
    buf = io.StringIO()
    write(data, buf)
    return buf.getvalue()


def read_inputs(paths, label_dict=None, unknown_labels="error") -> LabeledDataset:
    """Parse one or more flow CSVs and encode all labels against one dictionary."""
    with stage("parse"):
        parts = [parse_flow_csv(p) for p in paths]
        text_cols = set().union(*(p.text_columns for p in parts))
        if any(set(p.text_columns) != text_cols for p in parts):
            parts = [parse_flow_csv(p, force_text=text_cols) for p in paths]
    with stage("encode"):
        if label_dict is None:
            label_dict = LabelDictionary.from_labels(t for p in parts for t in p.raw_labels)
        encoded = []
        for p in parts:
            if unknown_labels == "drop":
                known = [i for i, t in enumerate(p.raw_labels) if label_dict.resolve(t) is not None]
                if len(known) != p.n_rows:
                    log.info("dropping %d rows with labels outside the dictionary", p.n_rows - len(known))
                p = p.take(known)
            encoded.append(relabel(p, label_dict))
        return concat_datasets(encoded)


def cmd_prepare(config: PipelineConfig) -> dict:
    out = Path(config.out)
    raw = read_inputs(config.inputs, config.label_dict, config.unknown_labels)
    with stage("clean"):
        data = clean_dataset(raw, config.policy)
        text_encoding = {}
        for name in raw.text_columns:
            if name in data.feature_names:
                epoch = name == "Timestamp" and config.policy.timestamp == "epoch"
                text_encoding[name] = "epoch" if epoch else "hash"
    with stage("split"):
        train, test = stratified_split(data, config.test_fraction, config.seed)
    with stage("standardize"):
        scaler = fit_standardizer(train)
        train_z = apply_standardizer(scaler, train)
        test_z = apply_standardizer(scaler, test)
    with stage("select"):
        selector = replace(EXTRA_TREES_DEFAULTS, n_trees=config.selector_trees, seed=config.seed)
        ranking = rank_features(train_z, selector, n_jobs=config.n_jobs)
        mask = select_top_k(ranking, config.k, train_z.feature_names)
        train_p = project(train_z, mask)
        test_p = project(test_z, mask)

    with stage("write"):
        files = {
            "train.csv": _csv_text(write_dataset_csv, train_p),
            "test.csv": _csv_text(write_dataset_csv, test_p),
            "standardizer.json": canonical_json(scaler.to_dict()),
            "mask.json": canonical_json(mask.to_dict()),
            "ranking.json": canonical_json(ranking.to_dict()),
            "ranking.csv": _csv_text(lambda r, fh: r.write_csv(fh), ranking),
            "cleaning_log.jsonl": _csv_text(write_cleaning_log, data.cleaning_log),
        }
        manifest = {
            "format_version": PREPARED_FORMAT,
            "config": config.to_dict(),
            "input_sha256": {str(p): _file_sha256(p) for p in config.inputs},
            "label_dict": data.label_dict.to_dict(),
            "rows": {
                "cleaned": data.label_counts(),
                "train": train.label_counts(),
                "test": test.label_counts(),
            },
            "n_candidate_features": len(data.feature_names),
            "features_kept": list(mask.names),
            "text_encoding": text_encoding,
            "cleaning_log": list(data.cleaning_log),
            "files": {name: hashlib.sha256(text.encode("utf-8")).hexdigest()
                      for name, text in sorted(files.items())},
        }
        for name, text in files.items():
            atomic_write_text(out / name, text)
        atomic_write_text(out / "manifest.json", canonical_json(manifest))
    return manifest


def load_manifest(prepared) -> dict:
    path = Path(prepared) / "manifest.json"
    if not path.exists():
        raise FileNotFoundError(f"{path}: not a prepared directory (run prepare first)")
    manifest = load_json(path)
    if manifest.get("format_version") != PREPARED_FORMAT:
        raise SchemaError(f"unsupported prepared format_version {manifest.get('format_version')!r}")
    return manifest


def load_split(prepared, split: str, label_dict: LabelDictionary) -> LabeledDataset:
    if split not in ("train", "test"):
        raise ArgumentError(f"split must be 'train' or 'test', got {split!r}")
    return parse_flow_csv(Path(prepared) / f"{split}.csv", label_dict=label_dict)


DEFAULT_SEEDED = ("rf", "svm")


def build_model(kind: str, params: dict | None = None, seed: int | None = None):
    if kind not in MODEL_KINDS:
        raise ArgumentError(f"model must be one of {sorted(MODEL_KINDS)}, got {kind!r}")
    params = {k: v for k, v in (params or {}).items() if v is not None}
    if seed is not None and kind in DEFAULT_SEEDED:
        params.setdefault("seed", seed)
    cls = MODEL_KINDS[kind]
    unknown = set(params) - set(cls().get_params())
    if unknown:
        raise ArgumentError(f"model {kind!r} does not take {sorted(unknown)}")
    return cls(**params)


def cmd_train(prepared, kind: str, out, params: dict | None = None) -> ModelArtifact:
    with stage("load"):
        manifest = load_manifest(prepared)
        label_dict = LabelDictionary.from_dict(manifest["label_dict"])
        train = load_split(prepared, "train", label_dict)
        scaler_state = load_json(Path(prepared) / "standardizer.json")
        mask = FeatureMask.from_dict(load_json(Path(prepared) / "mask.json"))
    with stage("train"):
        missing = [n for n, c in train.label_counts().items() if c == 0]
        if missing:
            raise SchemaError(f"train split has no rows for labels {missing}")
        model = build_model(kind, params, seed=manifest["config"]["seed"])
        model.fit(train.features, train.labels)
    artifact = ModelArtifact(
        kind=kind,
        model=model,
        label_dict=label_dict,
        standardizer=Standardizer.from_dict(scaler_state),
        mask=mask,
        text_encoding=manifest["text_encoding"],
        config={
            "prepared_config": manifest["config"],
            "train_rows": train.n_rows,
            "train_sha256": manifest["files"]["train.csv"],
        },
        created_at=reproducible_timestamp(),
    )
    with stage("write"):
        artifact.save(out)
    return artifact


def _predictions_csv(scores, label_names) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["row_index", "label"] + [f"score_{n}" for n in label_names])
    pred = predictions_from_scores(scores)
    for i, (p, row) in enumerate(zip(pred.tolist(), scores.tolist())):
        writer.writerow([i, label_names[p]] + [repr(v) for v in row])
    return buf.getvalue()


def cmd_evaluate(artifact_path, prepared, out, split: str = "test"):
    with stage("load"):
        artifact = ModelArtifact.load(artifact_path)
        data = load_split(prepared, split, artifact.label_dict)
        if data.feature_names != artifact.mask.names:
            missing = [n for n in artifact.mask.names if n not in data.feature_names]
            raise SchemaError(f"prepared data does not match the model's features; missing {missing}")
    with stage("evaluate"):
        scores = artifact.scores(data.features)
        provenance = {
            "model_kind": artifact.kind,
            "model_file": Path(artifact_path).name,
            "split": split,
            "rows": data.n_rows,
        }
        report = build_report(data.labels, scores, artifact.label_dict.names, provenance)
    with stage("write"):
        out = Path(out)
        atomic_write_text(out / "report.json", report_json(report))
        atomic_write_text(out / "roc.csv", _csv_text(lambda r, fh: r.write_roc_csv(fh), report))
        atomic_write_text(out / "predictions.csv", _predictions_csv(scores, artifact.label_dict.names))
    return report


def cmd_predict(artifact_path, input_csv, out) -> np.ndarray:
    """Score a raw flow CSV (label column optional); returns predicted indices."""
    with stage("load"):
        artifact = ModelArtifact.load(artifact_path)
    with stage("parse"):
        raw = parse_flow_csv(input_csv, require_label=False, force_text=artifact.text_encoding)
        missing = [n for n in artifact.mask.names if n not in raw.feature_names]
        if missing:
            raise SchemaError(f"input lacks model features {missing}")
        surprise = [n for n in artifact.mask.names
                    if n in raw.text_columns and n not in artifact.text_encoding]
        if surprise:
            raise SchemaError(f"numeric model features hold text in the input: {surprise}")
    with stage("clean"):
        policy = CleaningPolicy(
            nonfinite="zero",
            timestamp="epoch" if artifact.text_encoding.get("Timestamp") == "epoch" else "hash",
        )
        keep = FeatureMask(artifact.mask.names, range(len(artifact.mask.names)))
        data = clean_dataset(_project_raw(raw, keep), policy)
    with stage("score"):
        X = artifact.standardizer.subset(artifact.mask.names).transform(data.features)
        scores = artifact.scores(X)
    with stage("write"):
        atomic_write_text(out, _predictions_csv(scores, artifact.label_dict.names))
    return predictions_from_scores(scores)


def _project_raw(raw: LabeledDataset, mask: FeatureMask) -> LabeledDataset:
    projected = project(raw, mask)
    return replace(projected, text_columns={k: v for k, v in raw.text_columns.items() if k in mask.names})


# ---------------------------------------------------------------- CICDDoS2019


def cicddos_subsample(paths, out_csv, sample_sizes=None, seed: int = 0,
                      label_dict: LabelDictionary = CICDDOS2019_LABELS) -> dict:
    """Stream CICDDoS2019 CSVs into one smaller CSV.

    Labels named in ``sample_sizes`` are reservoir-sampled down to that many
    rows; other dictionary labels are kept in full; rows with labels outside
    the dictionary are skipped. Output keeps input order. Returns per-label
    counts written.
    """
    sample_sizes = {"DDoS_MSSQL": 50000} if sample_sizes is None else dict(sample_sizes)
    rng = random.Random(seed)
    header = None
    kept = []  # (order, row)
    reservoirs = {name: [] for name in sample_sizes}
    seen = {name: 0 for name in sample_sizes}
    order = 0
    for path in paths:
        with open(path, "r", encoding="utf-8-sig", newline="") as fh:
            reader = csv.reader(fh)
            head = [h.strip() for h in next(reader)]
            if header is None:
                header = head
                label_idx = header.index(LABEL_COLUMN)
            elif head != header:
                raise SchemaError(f"{path}: header differs from {paths[0]}")
            for row in reader:
                if len(row) != len(header):
                    continue
                name = label_dict.resolve(row[label_idx])
                if name is None:
                    continue
                order += 1
                if name not in sample_sizes:
                    kept.append((order, row))
                    continue
                seen[name] += 1
                res = reservoirs[name]
                if len(res) < sample_sizes[name]:
                    res.append((order, row))
                else:
                    j = rng.randrange(seen[name])
                    if j < sample_sizes[name]:
                        res[j] = (order, row)
    if header is None:
        raise ArgumentError("no input files")
    rows = sorted(kept + [r for res in reservoirs.values() for r in res], key=lambda t: t[0])
    counts = {}
    with open(out_csv, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for _, row in rows:
            writer.writerow(row)
            name = label_dict.resolve(row[label_idx])
            counts[name] = counts.get(name, 0) + 1
    return counts


# Expected extra-trees top-20 on the CICDDoS2019 BENIGN/LDAP/MSSQL subset;
# the feature-plausibility check compares against it.
REFERENCE_TOP20 = (
    "Timestamp", "Min Packet Length", "Source Port", "Protocol", "Packet Length Mean",
    "Avg Fwd Segment Size", "Fwd Packet Length Min", "Average Packet Size",
    "Fwd Packet Length Max", "Max Packet Length", "Fwd Packet Length Mean", "Flow ID",
    "Total Length of Fwd Packets", "Init_Win_bytes_forward", "Down/Up Ratio", "Inbound",
    "Destination Port", "Source IP", "Fwd Header Length", "min_seg_size_forward",
)
