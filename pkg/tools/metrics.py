"""
metrics.py — Classification metrics report
-------------------------------------------

Balanced accuracy, AUROC, support-weighted F1 and Cohen's kappa computed with
scikit-learn, plus the confusion matrix. Classes missing from the evaluation set are
excluded from balanced accuracy and AUROC and noted in `warnings`.
"""

import logging
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field
from sklearn.metrics import cohen_kappa_score, confusion_matrix, f1_score, recall_score, roc_auc_score

from tools.errors import DownstreamError

logger = logging.getLogger(__name__)

METRIC_NAMES = ("balanced_accuracy", "auroc", "weighted_f1", "cohens_kappa")


class MetricsReport(BaseModel):
    balanced_accuracy: float = Field(..., description="Mean of per-class recalls over present classes")
    auroc: Optional[float] = Field(None, description="Binary AUROC, or macro one-vs-rest for multi-class")
    weighted_f1: float
    cohens_kappa: float
    confusion_matrix: List[List[int]] = Field(..., description="Rows are true classes, columns predictions")
    n_eval: int
    n_classes: int
    warnings: List[str] = Field(default_factory=list)

    def scalars(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in METRIC_NAMES if getattr(self, name) is not None}


def _auroc(y_true: np.ndarray, scores: np.ndarray, present: List[int], n_classes: int) -> float:
    if n_classes == 2:
        return float(roc_auc_score(y_true, scores[:, 1]))
    per_class = [roc_auc_score(y_true == c, scores[:, c]) for c in present]
    return float(np.mean(per_class))


def compute_metrics(y_true: Sequence[int], scores: np.ndarray, n_classes: Optional[int] = None) -> MetricsReport:
    """
    y_true: (N,) integer labels.
    scores: (N, n_classes) class probabilities (or any per-class scores); predictions
            are the arg-max.
    """
    y_true = np.asarray(y_true, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    if len(y_true) == 0:
        raise DownstreamError("evaluation set is empty")
    if scores.ndim != 2 or scores.shape[0] != len(y_true):
        raise DownstreamError(f"scores shape {scores.shape} does not match {len(y_true)} labels")
    n_classes = scores.shape[1] if n_classes is None else n_classes
    if y_true.min() < 0 or y_true.max() >= n_classes:
        raise DownstreamError(f"label ids must lie in [0, {n_classes})")

    labels = list(range(n_classes))
    y_pred = scores.argmax(axis=1)
    cm = confusion_matrix(y_true, y_pred, labels=labels)
    present = [c for c in labels if cm[c].sum() > 0]
    warnings = []
    absent = [c for c in labels if c not in present]
    if absent:
        warnings.append(f"classes {absent} absent from evaluation set; excluded from balanced accuracy")

    balanced = float(recall_score(y_true, y_pred, labels=present, average="macro", zero_division=0))
    weighted_f1 = float(f1_score(y_true, y_pred, labels=labels, average="weighted", zero_division=0))
    kappa = float(cohen_kappa_score(y_true, y_pred, labels=labels))
    if np.isnan(kappa):
        # chance agreement is 1: a single class both observed and predicted
        kappa = 0.0
        warnings.append("cohen's kappa undefined (chance agreement 1); reported as 0")

    auroc = None
    if len(present) >= 2:
        auroc = _auroc(y_true, scores, present, n_classes)
    else:
        warnings.append("AUROC undefined with fewer than two classes present")

    for message in warnings:
        logger.warning(message)
    return MetricsReport(
        balanced_accuracy=balanced,
        auroc=auroc,
        weighted_f1=weighted_f1,
        cohens_kappa=kappa,
        confusion_matrix=cm.tolist(),
        n_eval=len(y_true),
        n_classes=n_classes,
        warnings=warnings,
    )


def aggregate(reports: Sequence[MetricsReport]) -> Dict[str, Dict[str, float]]:
    """Mean and population standard deviation of every scalar metric."""
    if not reports:
        raise DownstreamError("nothing to aggregate")
    out = {}
    for name in METRIC_NAMES:
        values = [getattr(r, name) for r in reports if getattr(r, name) is not None]
        if values:
            out[name] = {"mean": float(np.mean(values)), "std": float(np.std(values)), "n": len(values)}
    return out
