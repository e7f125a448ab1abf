"""Binary detection metrics. Label 1 is the positive (attack) class."""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, LabelError


def _pair(y_true, y_other):
    y_true = np.asarray(y_true).ravel().astype(int)
    y_other = np.asarray(y_other).ravel()
    if y_true.shape != y_other.shape:
        raise DimensionError(f"length mismatch: {y_true.size} vs {y_other.size}")
    if not np.all(np.isin(y_true, (0, 1))):
        raise LabelError("labels must be 0 or 1")
    return y_true, y_other


def confusion_counts(y_true, y_pred) -> dict:
    y_true, y_pred = _pair(y_true, y_pred)
    y_pred = y_pred.astype(int)
    return {
        "tp": int(np.sum((y_true == 1) & (y_pred == 1))),
        "fp": int(np.sum((y_true == 0) & (y_pred == 1))),
        "tn": int(np.sum((y_true == 0) & (y_pred == 0))),
        "fn": int(np.sum((y_true == 1) & (y_pred == 0))),
    }


def _ratio(num, den):
    return num / den if den else 0.0


def roc_auc(y_true, scores) -> float:
    """Mann-Whitney estimate; tied scores count one half."""
    y_true, scores = _pair(y_true, scores)
    scores = scores.astype(float)
    npos = int(y_true.sum())
    nneg = y_true.size - npos
    if npos == 0 or nneg == 0:
        raise LabelError("ROC-AUC needs both classes")
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    ranks = np.empty(scores.size)
    # average ranks over ties
    _, first, counts = np.unique(sorted_scores, return_index=True, return_counts=True)
    avg = first + (counts + 1) / 2.0
    ranks[order] = np.repeat(avg, counts)
    return float((ranks[y_true == 1].sum() - npos * (npos + 1) / 2.0) / (npos * nneg))


def pr_auc(y_true, scores) -> float:
    """Average precision: sum over recall steps of precision at that step."""
    y_true, scores = _pair(y_true, scores)
    npos = int(y_true.sum())
    if npos == 0:
        raise LabelError("PR-AUC needs at least one positive")
    order = np.argsort(-scores.astype(float), kind="mergesort")
    s = scores[order].astype(float)
    tp = np.cumsum(y_true[order])
    # cut only after the last member of each tied score block
    last = np.flatnonzero(np.r_[s[1:] != s[:-1], True])
    tp = tp[last]
    precision = tp / (last + 1.0)
    recall = tp / npos
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def detection_metrics(y_true, y_pred, scores=None) -> dict:
    c = confusion_counts(y_true, y_pred)
    tp, fp, tn, fn = c["tp"], c["fp"], c["tn"], c["fn"]
    precision = _ratio(tp, tp + fp)
    recall = _ratio(tp, tp + fn)
    out = dict(c)
    out.update(
        accuracy=_ratio(tp + tn, tp + fp + tn + fn),
        precision=precision,
        recall=recall,
        f1=_ratio(2 * tp, 2 * tp + fp + fn),
        fpr=_ratio(fp, fp + tn),
    )
    if scores is not None:
        y = np.asarray(y_true)
        both = 0 < y.sum() < y.size
        out["roc_auc"] = roc_auc(y_true, scores) if both else float("nan")
        out["pr_auc"] = pr_auc(y_true, scores) if y.sum() > 0 else float("nan")
    return out
