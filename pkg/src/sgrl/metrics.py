"""Ranking and confusion metrics for scored binary labels."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


class MetricError(ValueError):
    """Scores/labels unsuitable for the requested metric."""


class _NoPredictions:
    """Marker for precision-like metrics when nothing was flagged."""

    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self):
        return "NO_PREDICTIONS"

    def __str__(self):
        return "no-predictions"

    def __reduce__(self):
        return (_NoPredictions, ())


NO_PREDICTIONS = _NoPredictions()


def _split(scores, labels):
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise MetricError(f"scores {s.shape} and labels {y.shape} must be equal-length vectors")
    if s.size == 0:
        raise MetricError("no scored items")
    if not np.isin(y, (0, 1)).all():
        raise MetricError("labels must be 0/1")
    return s, y.astype(bool)


def _both_classes(y):
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC/KS need at least one positive and one negative")
    return n_pos, n_neg


def auc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative (ties count 1/2)."""
    s, y = _split(scores, labels)
    n_pos, n_neg = _both_classes(y)
    ranks = rankdata(s)  # average ranks: tied groups share the midrank
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


def ks(scores, labels) -> float:
    """max_t |TPR(t) - FPR(t)| with TPR(t) = P(score >= t | pos)."""
    s, y = _split(scores, labels)
    n_pos, n_neg = _both_classes(y)
    order = np.argsort(-s, kind="stable")
    s_sorted, y_sorted = s[order], y[order]
    tp = np.cumsum(y_sorted)
    fp = np.cumsum(~y_sorted)
    # evaluate only at the last position of each group of equal scores
    last = np.r_[s_sorted[1:] != s_sorted[:-1], True]
    gap = np.abs(tp[last] / n_pos - fp[last] / n_neg)
    return float(gap.max())


def confusion_metrics(scores, labels, rho: float = 0.5) -> dict:
    """ACC / Precision / Recall / F1 / DSR with flags = score > rho.

    With nothing flagged, Precision and DSR are ``NO_PREDICTIONS`` and F1 is 0.
    """
    if not 0.0 < rho < 1.0:
        raise MetricError(f"threshold must lie in (0, 1), got {rho}")
    s, y = _split(scores, labels)
    flag = s > rho
    tp = int(np.sum(flag & y))
    fp = int(np.sum(flag & ~y))
    fn = int(np.sum(~flag & y))
    tn = int(np.sum(~flag & ~y))
    recall = tp / (tp + fn) if tp + fn else 0.0
    if tp + fp:
        precision = tp / (tp + fp)
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    else:
        precision = NO_PREDICTIONS
        f1 = 0.0
    return {
        "ACC": (tp + tn) / len(s),
        "Precision": precision,
        "Recall": recall,
        "F1": f1,
        "DSR": precision,
        "TP": tp,
        "FP": fp,
        "FN": fn,
        "TN": tn,
    }


def evaluate(scores, labels, rho: float = 0.5) -> dict:
    """Every metric in one dict; AUC/KS are omitted when a class is missing."""
    out = {}
    s, y = _split(scores, labels)
    if y.any() and not y.all():
        out["AUC"] = auc(s, y)
        out["KS"] = ks(s, y)
    out.update(confusion_metrics(s, y, rho))
    return out


REPORT_ORDER = ("AUC", "ACC", "KS", "Precision", "Recall", "F1", "DSR", "TP", "FP", "FN", "TN")


def _fmt(v):
    if v is NO_PREDICTIONS:
        return str(v)
    if isinstance(v, int):
        return str(v)
    return f"{v:.6f}"


def format_table(report: dict) -> str:
    keys = [k for k in REPORT_ORDER if k in report]
    width = max(len(k) for k in keys)
    return "\n".join(f"{k:<{width}}  {_fmt(report[k]):>14}" for k in keys)


def format_lines(report: dict) -> str:
    return "\n".join(f"{k}={_fmt(report[k])}" for k in REPORT_ORDER if k in report)
