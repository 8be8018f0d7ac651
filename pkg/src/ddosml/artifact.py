"""Canonical JSON and the versioned model bundle written by ``train``."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import FormatVersionError, SchemaError
from .feature_select import FeatureMask
from .ingest import LabelDictionary, Standardizer
from .linear_models import GaussianNB, LinearSVM
from .trees import DecisionTreeClassifier, RandomForestClassifier

FORMAT_VERSION = 1

MODEL_KINDS = {
    "rf": RandomForestClassifier,
    "dt": DecisionTreeClassifier,
    "gnb": GaussianNB,
    "svm": LinearSVM,
}


def canonical_json(obj) -> str:
    """Sorted keys, no insignificant whitespace, shortest round-trip floats."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False,
                      ensure_ascii=False) + "\n"


def atomic_write_text(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_json(path):
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON at offset {exc.pos}: {exc.msg}") from exc


def reproducible_timestamp() -> str | None:
    """UTC time from SOURCE_DATE_EPOCH, or None so output bytes stay stable."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if not epoch:
        return None
    from datetime import datetime, timezone

    return datetime.fromtimestamp(int(epoch), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass
class ModelArtifact:
    kind: str
    model: object
    label_dict: LabelDictionary
    standardizer: Standardizer
    mask: FeatureMask
    text_encoding: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    created_at: str | None = None
    format_version: int = FORMAT_VERSION

    def scores(self, X) -> np.ndarray:
        """Per-label scores aligned with ``label_dict`` columns.

        Vote fractions for forests/trees, normalized posteriors for GNB,
        raw margins for the SVM.
        """
        if self.kind == "svm":
            raw = self.model.decision_function(X)
        else:
            raw = self.model.predict_proba(X)
        out = np.zeros((raw.shape[0], len(self.label_dict)))
        out[:, self.model.classes_.astype(np.int64)] = raw
        return out

    def to_dict(self):
        return {
            "format_version": self.format_version,
            "kind": self.kind,
            "model": self.model.get_state(),
            "label_dict": self.label_dict.to_dict(),
            "standardizer": self.standardizer.to_dict(),
            "mask": self.mask.to_dict(),
            "text_encoding": dict(sorted(self.text_encoding.items())),
            "config": self.config,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, d):
        version = d.get("format_version")
        if version != FORMAT_VERSION:
            raise FormatVersionError(f"unsupported format_version {version!r}")
        kind = d["kind"]
        if kind not in MODEL_KINDS:
            raise SchemaError(f"unknown model kind {kind!r}")
        return cls(
            kind=kind,
            model=MODEL_KINDS[kind].from_state(d["model"]),
            label_dict=LabelDictionary.from_dict(d["label_dict"]),
            standardizer=Standardizer.from_dict(d["standardizer"]),
            mask=FeatureMask.from_dict(d["mask"]),
            text_encoding=d.get("text_encoding", {}),
            config=d.get("config", {}),
            created_at=d.get("created_at"),
            format_version=version,
        )

    def save(self, path) -> None:
        atomic_write_text(path, canonical_json(self.to_dict()))

    @classmethod
    def load(cls, path) -> "ModelArtifact":
        return cls.from_dict(load_json(path))
