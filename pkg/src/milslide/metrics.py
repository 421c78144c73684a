"""Binary classification metrics built from first principles.

The ROC sweep processes tied scores as one group, so ties produce diagonal
segments and the trapezoidal area equals the tie-corrected pair statistic
(#concordant + half #tied) / (#pos * #neg). Areas are accumulated in exact
integer arithmetic and divided once at the end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence


@dataclass(frozen=True)
class RocCurve:
    """ROC points sorted by FPR then TPR, always spanning (0,0) to (1,1).

    ``thresholds[i]`` is the score cut that produced ``points[i]``; the
    (0,0) point carries +inf (nothing predicted positive).
    """

    points: tuple[tuple[float, float], ...]
    thresholds: tuple[float, ...]


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MetricSet:
    """Threshold metrics plus AUROC; 0/0 ratios come back as 0 and are
    listed in ``undefined`` instead of raising."""

    auroc: float
    f1: float
    precision: float
    recall: float
    specificity: float
    threshold: float
    undefined: tuple[str, ...] = field(default=())


def _check_inputs(scores: Sequence[float], labels: Sequence[int]) -> tuple[list[float], list[int]]:
    scores = [float(s) for s in scores]
    labels = [int(y) for y in labels]
    if len(scores) != len(labels):
        raise ValueError(f"scores ({len(scores)}) and labels ({len(labels)}) differ in length")
    if any(y not in (0, 1) for y in labels):
        raise ValueError("labels must be 0 or 1")
    return scores, labels


def _group_counts(scores: list[float], labels: list[int]) -> tuple[list[float], list[int], list[int]]:
    """Cumulative (fp, tp) after each group of tied scores, descending."""
    order = sorted(range(len(scores)), key=lambda i: -scores[i])
    cuts: list[float] = []
    fps: list[int] = []
    tps: list[int] = []
    fp = tp = 0
    i = 0
    while i < len(order):
        j = i
        cut = scores[order[i]]
        while j < len(order) and scores[order[j]] == cut:
            if labels[order[j]] == 1:
                tp += 1
            else:
                fp += 1
            j += 1
        cuts.append(cut)
        fps.append(fp)
        tps.append(tp)
        i = j
    return cuts, fps, tps


def roc_curve(scores: Sequence[float], labels: Sequence[int]) -> RocCurve:
    """Sweep descending unique thresholds; predict positive at score >= cut."""
    scores, labels = _check_inputs(scores, labels)
    pos = sum(labels)
    neg = len(labels) - pos
    if pos == 0 or neg == 0:
        raise ValueError("ROC needs at least one positive and one negative label")
    cuts, fps, tps = _group_counts(scores, labels)
    points = [(0.0, 0.0)] + [(fp / neg, tp / pos) for fp, tp in zip(fps, tps)]
    thresholds = [math.inf] + cuts
    return RocCurve(points=tuple(points), thresholds=tuple(thresholds))


def auroc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Trapezoidal area under the ROC curve.

    The trapezoid sum is formed over the integer (fp, tp) steps, which makes
    it bit-equal to (#concordant + #tied/2) / (#pos * #neg).
    """
    scores, labels = _check_inputs(scores, labels)
    pos = sum(labels)
    neg = len(labels) - pos
    if pos == 0 or neg == 0:
        raise ValueError("AUROC needs at least one positive and one negative label")
    _, fps, tps = _group_counts(scores, labels)
    area2 = 0  # twice the unnormalized area, exact
    prev_fp = prev_tp = 0
    for fp, tp in zip(fps, tps):
        area2 += (fp - prev_fp) * (tp + prev_tp)
        prev_fp, prev_tp = fp, tp
    return area2 / (2 * pos * neg)


def confusion(scores: Sequence[float], labels: Sequence[int], threshold: float) -> ConfusionMatrix:
    """Predict positive iff score >= threshold."""
    scores, labels = _check_inputs(scores, labels)
    tp = fp = tn = fn = 0
    for s, y in zip(scores, labels):
        predicted = s >= threshold
        if predicted and y == 1:
            tp += 1
        elif predicted and y == 0:
            fp += 1
        elif not predicted and y == 0:
            tn += 1
        else:
            fn += 1
    return ConfusionMatrix(tp=tp, fp=fp, tn=tn, fn=fn)


def _ratio(num: int, den: int, name: str, undefined: list[str]) -> float:
    if den == 0:
        undefined.append(name)
        return 0.0
    return num / den


def classification_metrics(cm: ConfusionMatrix, auroc_value: float, threshold: float = 0.5) -> MetricSet:
    if cm.total <= 0:
        raise ValueError("confusion matrix is empty")
    undefined: list[str] = []
    precision = _ratio(cm.tp, cm.tp + cm.fp, "precision", undefined)
    recall = _ratio(cm.tp, cm.tp + cm.fn, "recall", undefined)
    specificity = _ratio(cm.tn, cm.tn + cm.fp, "specificity", undefined)
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        undefined.append("f1")
        f1 = 0.0
    return MetricSet(
        auroc=float(auroc_value),
        f1=f1,
        precision=precision,
        recall=recall,
        specificity=specificity,
        threshold=float(threshold),
        undefined=tuple(undefined),
    )


def roc_points_text(curve: RocCurve) -> str:
    """Two-column FPR/TPR text, one point per line, for plotting."""
    lines = [f"{fpr:.17g} {tpr:.17g}" for fpr, tpr in curve.points]
    return "\n".join(lines) + "\n"
