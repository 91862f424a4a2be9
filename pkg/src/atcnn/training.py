"""Binary classifier training: BCE loss, mini-batch Adam, early stopping,
undersampled sub-datasets with a stratified 8:2 train/validation split."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import numerics as nx
from .constants import CLASS_INDEX, CLASSES
from .data import EcgRecord, stack
from .errors import ConfigError, DatasetError, DivergenceError, LabelError
from .metrics import f1_score
from .model import AtcnnModel, forward_batch, predict_proba
from .numerics import AdamState, Tensor, adam_step

log = logging.getLogger(__name__)

EPS = 1e-7


@dataclass(frozen=True)
class TrainConfig:
    target: str = "NSR"
    lr: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    early_stop_metric: str = "loss"  # "loss" or "f1"

    def __post_init__(self):
        if self.target not in CLASSES:
            raise ConfigError(f"unknown target class {self.target!r}")
        if self.batch_size < 1 or self.patience < 1 or self.max_epochs < 1:
            raise ConfigError("batch_size, patience and max_epochs must be >= 1")
        if not self.lr >= 0:
            raise ConfigError(f"learning rate must be >= 0, got {self.lr}")
        if self.early_stop_metric not in ("loss", "f1"):
            raise ConfigError(f"early_stop_metric must be 'loss' or 'f1', got {self.early_stop_metric!r}")


@dataclass
class Split:
    X: np.ndarray       # (N, 12, T)
    y: np.ndarray       # (N,) binary target
    ids: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.y)


@dataclass
class TrainLog:
    epochs: list[dict] = field(default_factory=list)
    stopped_early: bool = False
    best_epoch: int = 0

    def to_jsonl(self) -> str:
        lines = [json.dumps(row) for row in self.epochs]
        lines.append(json.dumps({"summary": True, "best_epoch": self.best_epoch,
                                 "stopped_early": self.stopped_early}))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "TrainLog":
        out = cls()
        for line in text.splitlines():
            if not line.strip():
                continue
            row = json.loads(line)
            if row.get("summary"):
                out.best_epoch, out.stopped_early = row["best_epoch"], row["stopped_early"]
            else:
                out.epochs.append(row)
        return out

    def save(self, path) -> Path:
        path = Path(path)
        path.write_text(self.to_jsonl(), encoding="utf-8")
        return path


def bce_loss(p: float, y: int) -> float:
    """Negative log-likelihood of label ``y`` under probability ``p`` (clamped)."""
    if y not in (0, 1):
        raise LabelError(f"label must be 0 or 1, got {y!r}")
    p = min(max(float(p), EPS), 1 - EPS)
    return -(y * math.log(p) + (1 - y) * math.log(1 - p))


def bce_batch(probs: Tensor, y) -> Tensor:
    """Mean BCE over a batch, differentiable in ``probs``."""
    y = np.asarray(y)
    if not np.isin(y, (0, 1)).all():
        raise LabelError("labels must be 0 or 1")
    y = y.astype(probs.dtype)
    p = nx.clip(probs, EPS, 1 - EPS)
    ll = y * nx.log(p) + (1 - y) * nx.log(1 - p)
    return -nx.mean(ll)


def bce_from_logits(logits: Tensor, y) -> Tensor:
    probs = nx.softmax(logits, axis=-1)[:, 0]
    return bce_batch(probs, y)


def subdataset_indices(labels, target: str, seed: int, val_fraction: float = 0.2):
    """Index arrays ``(train, val)`` into ``labels (N, 5)`` for one target class.

    Positives are all records carrying ``target``. Negatives are drawn
    without replacement up to twice the positive count, except for NSR
    which keeps every record. The union is split per binary label.
    """
    labels = np.asarray(labels)
    col = labels[:, CLASS_INDEX[target]].astype(bool)
    pos = np.flatnonzero(col)
    neg = np.flatnonzero(~col)
    if len(pos) == 0:
        raise DatasetError(f"no positive records for class {target}")
    rng = np.random.default_rng(seed)
    if target != "NSR" and len(neg) > 2 * len(pos):
        neg = np.sort(rng.choice(neg, size=2 * len(pos), replace=False))
    train, val = [], []
    for group in (pos, neg):
        group = rng.permutation(group)
        n_val = int(round(val_fraction * len(group)))
        val.append(group[:n_val])
        train.append(group[n_val:])
    train = rng.permutation(np.concatenate(train))
    val = rng.permutation(np.concatenate(val))
    return train, val


def build_subdataset(dev_set: list[EcgRecord], target: str, seed: int = 0,
                     val_fraction: float = 0.2) -> tuple[Split, Split]:
    X, Y, ids = stack(dev_set)
    tr, va = subdataset_indices(Y, target, seed, val_fraction)
    col = CLASS_INDEX[target]
    return (Split(X[tr], Y[tr, col].astype(np.uint8), [ids[i] for i in tr]),
            Split(X[va], Y[va, col].astype(np.uint8), [ids[i] for i in va]))


def binary_split(records: list[EcgRecord], target: str) -> Split:
    X, Y, ids = stack(records)
    return Split(X, Y[:, CLASS_INDEX[target]].astype(np.uint8) if len(ids) else np.zeros(0, np.uint8), ids)


def _evaluate(model: AtcnnModel, split: Split) -> tuple[float, float]:
    p = predict_proba(model, split.X)
    pc = np.clip(p, EPS, 1 - EPS)
    loss = float(-np.mean(split.y * np.log(pc) + (1 - split.y) * np.log(1 - pc)))
    return loss, f1_score(p >= 0.5, split.y)


def train_binary(model: AtcnnModel, train: Split, val: Split, cfg: TrainConfig,
                 progress=None) -> tuple[AtcnnModel, TrainLog]:
    """Train in place and return a copy holding the best-validation-epoch parameters."""
    if len(train) == 0 or len(val) == 0:
        raise DatasetError("training and validation sets must be non-empty")
    rng = np.random.default_rng(cfg.seed)
    params = model.parameters()
    state = AdamState.for_params(params, lr=cfg.lr)
    tlog = TrainLog()
    best_score = math.inf
    best_state = model.state()
    since_best = 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(train))
        total = 0.0
        for b, start in enumerate(range(0, len(order), cfg.batch_size)):
            idx = np.sort(order[start:start + cfg.batch_size])
            model.zero_grad()
            loss = bce_batch(forward_batch(model, train.X[idx]).probs, train.y[idx])
            value = loss.item()
            if not math.isfinite(value):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, batch {b}")
            loss.backward()
            adam_step(params, state)
            total += value * len(idx)
        val_loss, val_f1 = _evaluate(model, val)
        if not math.isfinite(val_loss):
            raise DivergenceError(f"non-finite validation loss at epoch {epoch}")
        row = {"epoch": epoch, "train_loss": total / len(train), "val_loss": val_loss, "val_f1": val_f1}
        tlog.epochs.append(row)
        if progress:
            progress(row)
        log.debug("%s epoch %d: %s", cfg.target, epoch, row)
        score = val_loss if cfg.early_stop_metric == "loss" else -val_f1
        if score < best_score:
            best_score, best_state, since_best = score, model.state(), 0
            tlog.best_epoch = epoch
        else:
            since_best += 1
            if since_best >= cfg.patience:
                tlog.stopped_early = True
                break
    model.zero_grad()
    best = model.copy()
    best.load_state(best_state)
    return best, tlog


def accuracy(model: AtcnnModel, split: Split) -> float:
    return float(np.mean((predict_proba(model, split.X) >= 0.5) == split.y.astype(bool)))
