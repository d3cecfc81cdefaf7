"""Label fusion and clustering evaluation (ACC, NMI, RI, pair-counting F)."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass
class ClusteringResult:
    fused_labels: np.ndarray
    view_labels: List[np.ndarray]
    mean_assignment: np.ndarray


@dataclass
class MetricsReport:
    acc: Optional[float]
    nmi: Optional[float]
    rand_index: Optional[float]
    fscore: Optional[float]

    def as_dict(self, **extra):
        return {**asdict(self), **extra}


def final_assignment(qs: Sequence[np.ndarray]) -> ClusteringResult:
    """Argmax of the view-averaged soft assignment; ties go to the lowest index."""
    qs = [np.asarray(q, dtype=np.float64) for q in qs]
    if not qs:
        raise ValueError("need at least one assignment matrix")
    shape = qs[0].shape
    for i, q in enumerate(qs):
        if q.ndim != 2 or q.shape != shape:
            raise ValueError(f"assignment {i} has shape {q.shape}, expected {shape}")
    mean = sum(qs) / len(qs)
    return ClusteringResult(
        fused_labels=mean.argmax(1),
        view_labels=[q.argmax(1) for q in qs],
        mean_assignment=mean,
    )


def contingency(pred, true) -> np.ndarray:
    pred = np.asarray(pred).ravel()
    true = np.asarray(true).ravel()
    if pred.size == 0:
        raise ValueError("empty label vectors")
    if pred.shape != true.shape:
        raise ValueError(f"length mismatch: {pred.size} vs {true.size}")
    _, p = np.unique(pred, return_inverse=True)
    _, t = np.unique(true, return_inverse=True)
    table = np.zeros((p.max() + 1, t.max() + 1), dtype=np.int64)
    np.add.at(table, (p, t), 1)
    return table


def accuracy(pred, true) -> float:
    table = contingency(pred, true)
    rows, cols = linear_sum_assignment(table, maximize=True)
    return float(table[rows, cols].sum()) / float(table.sum())


def _entropy(counts, n):
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def nmi(pred, true, average: str = "geometric") -> float:
    """Mutual information normalized by the geometric (or arithmetic) mean entropy."""
    table = contingency(pred, true)
    n = table.sum()
    a, b = table.sum(1), table.sum(0)
    ha, hb = _entropy(a, n), _entropy(b, n)
    if ha == 0 or hb == 0:
        # both partitions trivial (single cluster) means they agree
        return 1.0 if ha == hb == 0 else 0.0
    nz = table > 0
    outer = np.outer(a, b)[nz]
    mi = float((table[nz] / n * np.log(table[nz] * n / outer)).sum())
    if average == "geometric":
        norm = np.sqrt(ha * hb)
    elif average == "arithmetic":
        norm = 0.5 * (ha + hb)
    else:
        raise ValueError(f"unknown NMI normalization {average!r}")
    return float(min(max(mi / norm, 0.0), 1.0))


def _comb2(x):
    x = np.asarray(x, dtype=np.int64)
    return int((x * (x - 1) // 2).sum())


def pair_counts(pred, true):
    """(TP, FP, FN, TN) over unordered sample pairs, from the contingency table."""
    table = contingency(pred, true)
    n = int(table.sum())
    if n < 2:
        raise ValueError("pair-counting metrics need at least 2 samples")
    tp = _comb2(table)
    same_pred = _comb2(table.sum(1))
    same_true = _comb2(table.sum(0))
    fp = same_pred - tp
    fn = same_true - tp
    tn = n * (n - 1) // 2 - tp - fp - fn
    return tp, fp, fn, tn


def rand_index(pred, true) -> float:
    tp, fp, fn, tn = pair_counts(pred, true)
    return (tp + tn) / (tp + fp + fn + tn)


def fscore(pred, true) -> float:
    tp, fp, fn, _ = pair_counts(pred, true)
    if 2 * tp + fp + fn == 0:
        # no same-cluster pairs in either partition: they agree
        return 1.0
    return 2 * tp / (2 * tp + fp + fn)


def evaluate(pred, true, nmi_average: str = "geometric") -> MetricsReport:
    return MetricsReport(
        acc=accuracy(pred, true),
        nmi=nmi(pred, true, nmi_average),
        rand_index=rand_index(pred, true),
        fscore=fscore(pred, true),
    )
