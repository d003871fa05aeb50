"""Detection quality metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata


@dataclass(frozen=True)
class DetectionMetrics:
    tp: int
    fp: int
    tn: int
    fn: int
    precision: float
    recall: float
    f1: float
    auc: float | None

    def as_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "auc": self.auc,
        }


def evaluate(y_true, y_pred, scores=None) -> DetectionMetrics:
    """Confusion counts, precision/recall/F1 and (when scores are given)
    rank-based AUC.  Zero denominators yield 0; AUC needs both classes
    present, otherwise it is None."""
    y_true = np.asarray(y_true).astype(np.int64)
    y_pred = np.asarray(y_pred).astype(np.int64)
    if y_true.shape != y_pred.shape:
        raise ValueError("label arrays differ in length")
    if not np.isin(y_true, (0, 1)).all() or not np.isin(y_pred, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    fp = int(np.sum((y_true == 0) & (y_pred == 1)))
    tn = int(np.sum((y_true == 0) & (y_pred == 0)))
    fn = int(np.sum((y_true == 1) & (y_pred == 0)))
    precision = tp / (tp + fp) if (tp + fp) > 0 else 0.0
    recall = tp / (tp + fn) if (tp + fn) > 0 else 0.0
    f1 = (
        2.0 * precision * recall / (precision + recall)
        if (precision + recall) > 0
        else 0.0
    )
    auc = None
    if scores is not None:
        scores = np.asarray(scores, dtype=np.float64)
        n1 = int(np.sum(y_true == 1))
        n0 = y_true.size - n1
        if n1 > 0 and n0 > 0:
            ranks = rankdata(scores)
            auc = float(
                (np.sum(ranks[y_true == 1]) - n1 * (n1 + 1) / 2.0) / (n1 * n0)
            )
    return DetectionMetrics(
        tp=tp, fp=fp, tn=tn, fn=fn,
        precision=float(precision), recall=float(recall), f1=float(f1), auc=auc,
    )
