"""Multiclass DDoS flow classification.

Flow-CSV ingestion and standardization, extra-trees feature ranking,
entropy decision trees / random forests, Gaussian naive Bayes, a
squared-hinge one-vs-rest linear SVM, and ROC-based evaluation.
"""

from .evaluation import build_report, confusion_matrix, roc_curve
from .feature_select import ExtraTreesSelector, rank_features, select_top_k
from .ingest import (
    CICDDOS2019_LABELS,
    CleaningPolicy,
    LabelDictionary,
    LabeledDataset,
    Standardizer,
    clean_dataset,
    parse_flow_csv,
    stratified_split,
)
from .linear_models import GaussianNB, LinearSVM
from .trees import DecisionTreeClassifier, ExtraTreesClassifier, RandomForestClassifier

__all__ = [
    "CICDDOS2019_LABELS",
    "CleaningPolicy",
    "DecisionTreeClassifier",
    "ExtraTreesClassifier",
    "ExtraTreesSelector",
    "GaussianNB",
    "LabelDictionary",
    "LabeledDataset",
    "LinearSVM",
    "RandomForestClassifier",
    "Standardizer",
    "build_report",
    "clean_dataset",
    "confusion_matrix",
    "parse_flow_csv",
    "rank_features",
    "roc_curve",
    "select_top_k",
    "stratified_split",
]

__version__ = "0.1.0"
