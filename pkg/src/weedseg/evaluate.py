"""Per-class precision / recall / F1, confusion matrices, ROC curves and AUC.

Frames are micro-averaged: confusion counts are summed over all frames before
scoring, and ROC/AUC pool every pixel of every frame.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvariantError, ShapeMismatchError
from .imgcore import CLASS_NAMES, NUM_CLASSES, LabelMask, ProbabilityMap


@dataclass(frozen=True)
class ConfusionMatrix:
    """``counts[true][pred]`` pixel counts."""

    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise InvariantError(f"confusion matrix must be square, got {counts.shape}")
        if counts.min() < 0:
            raise InvariantError("confusion counts must be non-negative")
        counts = counts.copy()
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def tp(self, c: int) -> int:
        return int(self.counts[c, c])

    def fp(self, c: int) -> int:
        return int(self.counts[:, c].sum() - self.counts[c, c])

    def fn(self, c: int) -> int:
        return int(self.counts[c, :].sum() - self.counts[c, c])

    def tn(self, c: int) -> int:
        return self.total - self.tp(c) - self.fp(c) - self.fn(c)


@dataclass(frozen=True)
class ClassScores:
    precision: tuple[float, ...]
    recall: tuple[float, ...]
    f1: tuple[float, ...]


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float


def confusion(pred: LabelMask, truth: LabelMask, num_classes: int = NUM_CLASSES) -> ConfusionMatrix:
    if pred.shape != truth.shape:
        raise ShapeMismatchError(f"prediction {pred.shape} vs truth {truth.shape}")
    flat = truth.labels.astype(np.int64).ravel() * num_classes + pred.labels.astype(np.int64).ravel()
    return ConfusionMatrix(np.bincount(flat, minlength=num_classes * num_classes).reshape(num_classes, num_classes))


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def scores(cm: ConfusionMatrix) -> ClassScores:
    """Precision, recall and F1 per class; zero denominators give 0."""
    p, r, f = [], [], []
    for c in range(cm.counts.shape[0]):
        tp, fp, fn = cm.tp(c), cm.fp(c), cm.fn(c)
        prec = _ratio(tp, tp + fp)
        rec = _ratio(tp, tp + fn)
        p.append(prec)
        r.append(rec)
        f.append(2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0)
    return ClassScores(tuple(p), tuple(r), tuple(f))


def _average_ranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    # tie groups share the mean of their 1-based positions
    starts = np.r_[0, np.flatnonzero(np.diff(xs)) + 1]
    ends = np.r_[starts[1:], len(xs)]
    group_rank = (starts + 1 + ends) / 2.0
    ranks = np.empty(len(x), dtype=np.float64)
    ranks[order] = np.repeat(group_rank, ends - starts)
    return ranks


def mann_whitney_auc(pos: np.ndarray, neg: np.ndarray) -> float:
    """P(score_pos > score_neg) + 0.5 P(tie), via the rank-sum statistic."""
    pos = np.asarray(pos, dtype=np.float64).ravel()
    neg = np.asarray(neg, dtype=np.float64).ravel()
    if pos.size == 0 or neg.size == 0:
        raise InvariantError("AUC needs at least one positive and one negative sample")
    ranks = _average_ranks(np.concatenate([pos, neg]))
    n1, n0 = pos.size, neg.size
    u = ranks[:n1].sum() - n1 * (n1 + 1) / 2.0
    return float(u / (n1 * n0))


def roc_points(pos: np.ndarray, neg: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sweep every distinct score as a ``score >= t`` threshold, high to low.

    Returns ``(fpr, tpr, thresholds)`` including the (0, 0) start (threshold
    +inf) and ending at (1, 1).
    """
    pos = np.asarray(pos, dtype=np.float64).ravel()
    neg = np.asarray(neg, dtype=np.float64).ravel()
    if pos.size == 0 or neg.size == 0:
        raise InvariantError("ROC needs at least one positive and one negative sample")
    scores_all = np.concatenate([pos, neg])
    is_pos = np.concatenate([np.ones(pos.size, dtype=bool), np.zeros(neg.size, dtype=bool)])
    order = np.argsort(-scores_all, kind="mergesort")
    s = scores_all[order]
    y = is_pos[order]
    last = np.r_[np.flatnonzero(np.diff(s)), len(s) - 1]
    tps = np.cumsum(y)[last]
    fps = np.cumsum(~y)[last]
    tpr = np.r_[0.0, tps / pos.size]
    fpr = np.r_[0.0, fps / neg.size]
    thr = np.r_[np.inf, s[last]]
    return fpr, tpr, thr


def trapezoid_auc(fpr: np.ndarray, tpr: np.ndarray) -> float:
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


def roc_from_scores(pos, neg) -> RocCurve:
    fpr, tpr, thr = roc_points(pos, neg)
    return RocCurve(fpr, tpr, thr, mann_whitney_auc(pos, neg))


def roc_auc(probs: ProbabilityMap, truth: LabelMask, c: int) -> RocCurve:
    """One-vs-rest ROC of class ``c`` scored by ``P(c)``."""
    if probs.shape != truth.shape:
        raise ShapeMismatchError(f"probabilities {probs.shape} vs truth {truth.shape}")
    score = probs.probs[c].ravel()
    lab = truth.labels.ravel() == c
    if lab.all() or not lab.any():
        raise InvariantError(f"class {c} needs both positive and negative pixels for ROC")
    return roc_from_scores(score[lab], score[~lab])


def argmax_labels(pm: ProbabilityMap) -> LabelMask:
    """Per-pixel most probable class; ties go to the lowest class id."""
    return LabelMask(np.argmax(pm.probs, axis=0).astype(np.uint8))


@dataclass
class EvaluationReport:
    confusion: ConfusionMatrix
    scores: ClassScores
    auc: dict = field(default_factory=dict)
    rocs: dict = field(default_factory=dict)
    frame_count: int = 0

    @property
    def accuracy(self) -> float:
        return _ratio(int(np.trace(self.confusion.counts)), self.confusion.total)

    def to_json(self) -> dict:
        n = self.confusion.counts.shape[0]
        names = list(CLASS_NAMES[:n])
        return {
            "version": 1,
            "averaging": "micro (confusion summed over frames; AUC pooled over pixels)",
            "frame_count": self.frame_count,
            "pixel_count": self.confusion.total,
            "classes": names,
            "confusion": self.confusion.counts.tolist(),
            "accuracy": self.accuracy,
            "per_class": {
                names[c]: {
                    "precision": self.scores.precision[c],
                    "recall": self.scores.recall[c],
                    "f1": self.scores.f1[c],
                    "auc": self.auc.get(c),
                }
                for c in range(n)
            },
        }

    def to_text(self) -> str:
        n = self.confusion.counts.shape[0]
        lines = [
            "# micro-averaged over frames; AUC pooled over pixels",
            f"# frames={self.frame_count} pixels={self.confusion.total} accuracy={self.accuracy:.4f}",
            f"{'class':<8}{'precision':>10}{'recall':>10}{'f1':>10}{'auc':>10}",
        ]
        for c in range(n):
            auc = self.auc.get(c)
            auc_s = f"{auc:>10.4f}" if auc is not None else f"{'-':>10}"
            lines.append(
                f"{CLASS_NAMES[c]:<8}{self.scores.precision[c]:>10.4f}"
                f"{self.scores.recall[c]:>10.4f}{self.scores.f1[c]:>10.4f}{auc_s}"
            )
        lines.append("confusion (rows=truth, cols=pred):")
        for c in range(n):
            lines.append(f"{CLASS_NAMES[c]:<8}" + "".join(f"{v:>10d}" for v in self.confusion.counts[c]))
        return "\n".join(lines) + "\n"

    def write(self, json_path=None, text_path=None, roc_csv=None) -> None:
        if json_path:
            with open(json_path, "w", encoding="utf-8") as fh:
                json.dump(self.to_json(), fh, indent=2)
                fh.write("\n")
        if text_path:
            with open(text_path, "w", encoding="utf-8") as fh:
                fh.write(self.to_text())
        if roc_csv and self.rocs:
            write_roc_csv(self.rocs, roc_csv)


def write_roc_csv(rocs: dict, path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh)
        wr.writerow(["class", "threshold", "fpr", "tpr"])
        for c, roc in sorted(rocs.items()):
            for t, f, p in zip(roc.thresholds, roc.fpr, roc.tpr):
                wr.writerow([CLASS_NAMES[c], repr(float(t)), repr(float(f)), repr(float(p))])


def evaluate_dataset(outputs: Sequence, truths: Sequence[LabelMask]) -> EvaluationReport:
    """Score a sequence of model outputs against truth masks.

    ``outputs`` holds :class:`ProbabilityMap` or :class:`LabelMask` items;
    AUC is reported only when every output carries probabilities, and only
    for classes with both positive and negative pixels.
    """
    if len(outputs) != len(truths):
        raise ShapeMismatchError(f"{len(outputs)} outputs vs {len(truths)} truth masks")
    if not truths:
        raise InvariantError("evaluate_dataset needs at least one frame")
    total = None
    have_probs = all(isinstance(o, ProbabilityMap) for o in outputs)
    for out, truth in zip(outputs, truths):
        pred = argmax_labels(out) if isinstance(out, ProbabilityMap) else out
        cm = confusion(pred, truth)
        total = cm if total is None else total + cm
    report = EvaluationReport(total, scores(total), frame_count=len(truths))
    if have_probs:
        n = outputs[0].num_classes
        lab = np.concatenate([t.labels.ravel() for t in truths])
        for c in range(n):
            sc = np.concatenate([o.probs[c].ravel() for o in outputs])
            pos = lab == c
            if pos.any() and not pos.all():
                roc = roc_from_scores(sc[pos], sc[~pos])
                report.auc[c] = roc.auc
                report.rocs[c] = roc
    return report
