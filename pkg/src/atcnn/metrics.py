"""Binary and multi-label evaluation: confusion counts, derived rates, ROC."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .constants import CLASSES
from .errors import ContractError, DegenerateROCError, DimensionError


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ContractError(f"negative confusion count in {self}")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    @classmethod
    def from_predictions(cls, pred, truth) -> "ConfusionCounts":
        pred = np.asarray(pred).astype(bool)
        truth = np.asarray(truth).astype(bool)
        if pred.shape != truth.shape:
            raise DimensionError(f"prediction shape {pred.shape} != truth shape {truth.shape}")
        return cls(tp=int(np.sum(pred & truth)), tn=int(np.sum(~pred & ~truth)),
                   fp=int(np.sum(pred & ~truth)), fn=int(np.sum(~pred & truth)))


@dataclass(frozen=True)
class Metrics:
    recall: float
    precision: float
    specificity: float
    accuracy: float
    f1: float
    degenerate: tuple[str, ...] = ()   # names of metrics whose denominator was zero

    def as_percent(self) -> dict[str, float]:
        return {"Re": 100 * self.recall, "Pr": 100 * self.precision, "Sp": 100 * self.specificity,
                "Acc": 100 * self.accuracy, "F1": 100 * self.f1}


def _ratio(num: float, den: float, name: str, flags: list[str]) -> float:
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def derive_metrics(c: ConfusionCounts) -> Metrics:
    if c.total == 0:
        raise ContractError("cannot derive metrics from all-zero confusion counts")
    flags: list[str] = []
    re = _ratio(c.tp, c.tp + c.fn, "recall", flags)
    pr = _ratio(c.tp, c.tp + c.fp, "precision", flags)
    sp = _ratio(c.tn, c.tn + c.fp, "specificity", flags)
    acc = (c.tp + c.tn) / c.total
    f1 = _ratio(2 * pr * re, pr + re, "f1", flags)
    return Metrics(re, pr, sp, acc, f1, tuple(flags))


def f1_score(pred, truth) -> float:
    return derive_metrics(ConfusionCounts.from_predictions(pred, truth)).f1


def exact_match(pred, truth) -> float:
    """Fraction of records whose whole label vector is predicted correctly."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise DimensionError(f"prediction shape {pred.shape} != truth shape {truth.shape}")
    if pred.ndim != 2 or len(pred) == 0:
        raise DimensionError(f"expected a non-empty (N, labels) array, got shape {pred.shape}")
    return float(np.mean(np.all(pred.astype(bool) == truth.astype(bool), axis=1)))


@dataclass
class RocCurve:
    thresholds: np.ndarray   # descending; the first entry is +inf, i.e. the (0, 0) point
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def roc_curve(scores, labels) -> RocCurve:
    """Threshold sweep over the unique scores (positive when score >= t), trapezoidal AUC."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise DimensionError(f"scores {scores.shape} and labels {labels.shape} must be equal-length 1-D")
    if not np.isin(labels, (0, 1)).all():
        raise ContractError("labels must be 0/1")
    labels = labels.astype(bool)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise DegenerateROCError("ROC needs both positive and negative labels")
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], labels[order]
    # last index of each run of equal scores
    ends = np.r_[np.nonzero(np.diff(s))[0], len(s) - 1]
    tps = np.cumsum(y)[ends]
    fps = np.cumsum(~y)[ends]
    tpr = np.r_[0.0, tps / n_pos]
    fpr = np.r_[0.0, fps / n_neg]
    thresholds = np.r_[np.inf, s[ends]]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2))
    return RocCurve(thresholds, fpr, tpr, auc)


def pairwise_auc(scores, labels) -> float:
    """P(score_pos > score_neg) + 0.5 P(tie) by direct pair enumeration."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    pos, neg = scores[labels], scores[~labels]
    if len(pos) == 0 or len(neg) == 0:
        raise DegenerateROCError("AUC needs both positive and negative labels")
    diff = pos[:, None] - neg[None, :]
    return float((np.sum(diff > 0) + 0.5 * np.sum(diff == 0)) / diff.size)


@dataclass
class ClassReport:
    name: str
    counts: ConfusionCounts
    metrics: Metrics
    roc: RocCurve | None = None


@dataclass
class EvalReport:
    classes: list[ClassReport]
    exact_match: float
    n_records: int
    macro: dict[str, float] = field(default_factory=dict)

    def to_text(self) -> str:
        cols = ("Re", "Pr", "Sp", "Acc", "F1")
        lines = ["Class\tTP\tFN\tFP\tTN\t" + "\t".join(f"{c} (%)" for c in cols)]
        for cr in self.classes:
            c = cr.counts
            pct = cr.metrics.as_percent()
            lines.append(f"{cr.name}\t{c.tp}\t{c.fn}\t{c.fp}\t{c.tn}\t"
                         + "\t".join(f"{pct[k]:.2f}" for k in cols))
        lines.append("Average\t\t\t\t\t" + "\t".join(f"{self.macro[k]:.2f}" for k in cols))
        lines.append(f"Exact match (%)\t{100 * self.exact_match:.2f}")
        aucs = [f"{cr.name}={cr.roc.auc:.4f}" for cr in self.classes if cr.roc is not None]
        if aucs:
            lines.append("AUC\t" + "\t".join(aucs))
        return "\n".join(lines) + "\n"


def roc_csv(roc: RocCurve) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["threshold", "fpr", "tpr"])
    for t, f, p in zip(roc.thresholds, roc.fpr, roc.tpr):
        w.writerow(["inf" if np.isinf(t) else f"{t:.6f}", f"{f:.6f}", f"{p:.6f}"])
    return buf.getvalue()


def macro_average(per_class: list[Metrics]) -> dict[str, float]:
    rows = [m.as_percent() for m in per_class]
    return {k: float(np.mean([r[k] for r in rows])) for k in rows[0]}


def evaluate(pred, truth, scores=None, class_names=CLASSES) -> EvalReport:
    """Per-class counts and rates, macro averages, exact match and ROC.

    ``pred`` and ``truth`` are ``(N, C)`` binary arrays; ``scores`` optional
    ``(N, C)`` probabilities used for ROC (classes with one label value get none).
    """
    pred = np.asarray(pred).astype(bool)
    truth = np.asarray(truth).astype(bool)
    if pred.shape != truth.shape or pred.ndim != 2 or pred.shape[1] != len(class_names):
        raise DimensionError(f"pred {pred.shape} / truth {truth.shape} do not match {len(class_names)} classes")
    if len(pred) == 0:
        raise ContractError("nothing to evaluate")
    reports = []
    for j, name in enumerate(class_names):
        counts = ConfusionCounts.from_predictions(pred[:, j], truth[:, j])
        roc = None
        if scores is not None and 0 < truth[:, j].sum() < len(truth):
            roc = roc_curve(np.asarray(scores)[:, j], truth[:, j].astype(int))
        reports.append(ClassReport(name, counts, derive_metrics(counts), roc))
    return EvalReport(reports, exact_match(pred, truth), len(pred),
                      macro_average([r.metrics for r in reports]))
