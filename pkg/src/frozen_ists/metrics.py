"""Evaluation metrics for classification and value prediction."""
from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


def _binary(scores, labels):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.shape != labels.shape:
        raise ValueError(f"{scores.shape[0]} scores for {labels.shape[0]} labels")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be binary")
    return scores, labels.astype(bool)


def auroc(scores, labels) -> float:
    """P(score_pos > score_neg) + 0.5 P(tie), via the Mann-Whitney rank sum."""
    scores, pos = _binary(scores, labels)
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUROC needs at least one positive and one negative")
    ranks = rankdata(scores)  # average ranks resolve ties as half-credit
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auprc(scores, labels) -> float:
    """Average precision: mean over positives of the precision at each positive's rank.

    Ranking is by descending score; tied scores keep their input order.
    """
    scores, pos = _binary(scores, labels)
    n_pos = int(pos.sum())
    if n_pos == 0:
        raise ValueError("AUPRC needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    hits = pos[order]
    ranks = np.flatnonzero(hits) + 1
    precision = np.arange(1, n_pos + 1) / ranks
    return float(precision.mean())


def multiclass_auc(probs, labels, metric=auroc) -> float:
    """Binary metric on the positive-class score, or its one-vs-rest macro mean for C > 2."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if probs.ndim == 1:
        return metric(probs, labels)
    if probs.shape[1] == 2:
        return metric(probs[:, 1], labels)
    vals = []
    for c in range(probs.shape[1]):
        y = (labels == c).astype(int)
        if 0 < y.sum() < len(y) or (metric is auprc and y.sum() > 0):
            vals.append(metric(probs[:, c], y))
    if not vals:
        raise ValueError("no class has both positives and negatives")
    return float(np.mean(vals))


def classification_report(predicted, labels, n_classes: int) -> dict[str, float]:
    """Accuracy plus macro precision/recall/F1 over all ``n_classes`` classes."""
    predicted = np.asarray(predicted, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predicted.shape != labels.shape or predicted.size == 0:
        raise ValueError("predictions and labels must be equal-length and non-empty")
    if predicted.min() < 0 or labels.min() < 0 or max(predicted.max(), labels.max()) >= n_classes:
        raise ValueError(f"class index outside [0, {n_classes})")
    conf = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(conf, (labels, predicted), 1)
    tp = np.diag(conf).astype(np.float64)
    pred_count = conf.sum(axis=0)
    true_count = conf.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(pred_count > 0, tp / pred_count, 0.0)
        recall = np.where(true_count > 0, tp / true_count, 0.0)
        f1 = np.where(precision + recall > 0, 2 * precision * recall / (precision + recall), 0.0)
    return {
        "accuracy": float(tp.sum() / labels.size),
        "precision": float(precision.mean()),
        "recall": float(recall.mean()),
        "f1": float(f1.mean()),
    }


def mse_mae(predictions, targets) -> tuple[float, float]:
    p = np.asarray(predictions, dtype=np.float64).ravel()
    t = np.asarray(targets, dtype=np.float64).ravel()
    if p.shape != t.shape or p.size == 0:
        raise ValueError("predictions and targets must be equal-length and non-empty")
    err = p - t
    return float(np.mean(err ** 2)), float(np.mean(np.abs(err)))


def aggregate(reports: list[dict[str, float]]) -> dict[str, tuple[float, float]]:
    """Per-metric (mean, population std) across seeds."""
    if not reports:
        raise ValueError("nothing to aggregate")
    keys = reports[0].keys()
    return {k: (float(np.mean([r[k] for r in reports])), float(np.std([r[k] for r in reports]))) for k in keys}
