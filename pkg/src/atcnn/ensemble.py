"""Multi-label decisions from five independent binary classifiers."""
from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .constants import CLASSES
from .errors import ConfigError, EnsembleIncompleteError
from .model import AtcnnModel, predict_proba

RISK_GROUPS = ("normal", "single-disorder", "multimorbidity")


def risk_group(labels) -> str:
    """Group by the number of disease bits; the NSR bit is ignored."""
    n = int(np.sum(np.asarray(labels)[1:]))
    return RISK_GROUPS[min(n, 2)]


@dataclass
class MultiLabelDecision:
    probs: np.ndarray      # (5,) in CLASSES order
    labels: np.ndarray     # (5,) uint8
    risk: str
    record_id: str = ""

    def to_row(self) -> list[str]:
        return ([self.record_id] + [f"{p:.6f}" for p in self.probs]
                + [str(int(b)) for b in self.labels] + [self.risk])


DECISION_HEADER = (["record_id"] + [f"p_{c}" for c in CLASSES] + [f"y_{c}" for c in CLASSES]
                   + ["risk_group"])


@dataclass
class MultiLabelEnsemble:
    models: dict[str, AtcnnModel]
    threshold: float = 0.5

    def __post_init__(self):
        if not 0 < self.threshold < 1:
            raise ConfigError(f"threshold must lie in (0, 1), got {self.threshold}")
        lengths = {m.config.input_length for m in self.models.values()}
        if len(lengths) > 1:
            raise ConfigError(f"ensemble members disagree on input length: {sorted(lengths)}")
        for cls, m in self.models.items():
            if m.target != cls:
                raise ConfigError(f"model under key {cls} targets {m.target}")

    def check_complete(self):
        missing = [c for c in CLASSES if c not in self.models]
        if missing:
            raise EnsembleIncompleteError(f"ensemble is missing models for {', '.join(missing)}")


def threshold_probs(probs, threshold: float = 0.5) -> np.ndarray:
    """Positive when ``p >= threshold``."""
    return (np.asarray(probs) >= threshold).astype(np.uint8)


def decide(probs, threshold: float = 0.5, record_id: str = "") -> MultiLabelDecision:
    probs = np.asarray(probs, dtype=np.float64)
    labels = threshold_probs(probs, threshold)
    return MultiLabelDecision(probs, labels, risk_group(labels), record_id)


def ensemble_probs(ens: MultiLabelEnsemble, X) -> np.ndarray:
    """``(N, 5)`` class probabilities for records ``X (N, 12, T)``."""
    ens.check_complete()
    X = np.asarray(X)
    return np.stack([predict_proba(ens.models[c], X) for c in CLASSES], axis=1)


def predict_multilabel(ens: MultiLabelEnsemble, record, record_id: str = "") -> MultiLabelDecision:
    probs = ensemble_probs(ens, np.asarray(record)[None])[0]
    return decide(probs, ens.threshold, record_id)


def predict_batch(ens: MultiLabelEnsemble, X, ids=None) -> list[MultiLabelDecision]:
    probs = ensemble_probs(ens, X)
    ids = ids if ids is not None else [""] * len(probs)
    return [decide(p, ens.threshold, rid) for p, rid in zip(probs, ids)]


def risk_stratify(decisions: list[MultiLabelDecision], truth=None) -> dict:
    """Histogram over risk groups; with ``truth (N, 5)`` also match counts.

    ``group_matches[g]``: records truly in group ``g`` whose predicted group is
    also ``g``. ``exact_matches[g]``: the subset whose full label vector matches.
    """
    counts = Counter({g: 0 for g in RISK_GROUPS})
    counts.update(d.risk for d in decisions)
    out = {"counts": dict(counts)}
    if truth is not None:
        truth = np.asarray(truth)
        if len(truth) != len(decisions):
            raise ValueError(f"{len(decisions)} decisions but {len(truth)} truth vectors")
        true_groups = [risk_group(t) for t in truth]
        out["true_counts"] = {g: true_groups.count(g) for g in RISK_GROUPS}
        out["group_matches"] = {g: 0 for g in RISK_GROUPS}
        out["exact_matches"] = {g: 0 for g in RISK_GROUPS}
        for d, t, g in zip(decisions, truth, true_groups):
            if d.risk == g:
                out["group_matches"][g] += 1
                if np.array_equal(d.labels.astype(bool), np.asarray(t).astype(bool)):
                    out["exact_matches"][g] += 1
    return out


def decisions_csv(decisions: list[MultiLabelDecision]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(DECISION_HEADER)
    for d in decisions:
        w.writerow(d.to_row())
    return buf.getvalue()


def read_decisions_csv(text: str) -> list[MultiLabelDecision]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != DECISION_HEADER:
        raise ValueError("not a decision file (unexpected header)")
    out = []
    n = len(CLASSES)
    for row in rows[1:]:
        if not row:
            continue
        probs = np.array([float(x) for x in row[1:1 + n]])
        labels = np.array([int(x) for x in row[1 + n:1 + 2 * n]], dtype=np.uint8)
        out.append(MultiLabelDecision(probs, labels, row[1 + 2 * n], row[0]))
    return out
