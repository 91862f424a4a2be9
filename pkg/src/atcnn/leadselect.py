"""Lead ranking from spatial attention and nested lead-subset sweeps."""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .constants import LEADS
from .errors import AtcnnError, ConfigError, DatasetError
from .metrics import f1_score
from .model import ArchConfig, AtcnnModel, forward, init_parameters, predict_proba
from .training import Split, TrainConfig, train_binary

log = logging.getLogger(__name__)


@dataclass
class LeadRanking:
    target: str
    medians: np.ndarray          # (12,) median spatial weight per lead
    order: list[int]             # lead indices, most important first

    @property
    def names(self) -> list[str]:
        return [LEADS[i] for i in self.order]


def rank_from_weights(target: str, betas, decimals: int = 9) -> LeadRanking:
    """Rank leads by the median over records of ``betas (N, 12)``.

    Medians equal to ``decimals`` places tie and keep standard lead order.
    """
    betas = np.asarray(betas, dtype=np.float64)
    if betas.ndim != 2 or betas.shape[1] != len(LEADS) or len(betas) == 0:
        raise DatasetError(f"need a non-empty (N, 12) weight array, got {betas.shape}")
    med = np.median(betas, axis=0)
    key = np.round(med, decimals)
    order = sorted(range(len(LEADS)), key=lambda i: (-key[i], i))
    return LeadRanking(target, med, order)


def spatial_weights(model: AtcnnModel, X, batch_size: int = 64) -> np.ndarray:
    """Spatial attention ``(N, 12)`` for every record; zeros on excluded leads."""
    if model.config.variant in ("single_lead", "no_attention_gap"):
        raise ConfigError(f"variant {model.config.variant} has no spatial attention")
    X = np.asarray(X)
    return np.concatenate([forward(model, X[s:s + batch_size]).beta
                           for s in range(0, len(X), batch_size)])


def rank_leads(model: AtcnnModel, val_X) -> LeadRanking:
    if len(val_X) == 0:
        raise DatasetError("validation set is empty")
    return rank_from_weights(model.target, spatial_weights(model, val_X))


@dataclass
class SubsetSweepResult:
    target: str
    entries: list[tuple[list[int], float]] = field(default_factory=list)
    optimal_k: int = 0

    def entry(self, k: int) -> tuple[list[int], float]:
        for subset, f1 in self.entries:
            if len(subset) == k:
                return subset, f1
        raise KeyError(f"subset size {k} was not evaluated")

    @property
    def optimal_subset(self) -> list[int]:
        return self.entry(self.optimal_k)[0]

    @property
    def optimal_f1(self) -> float:
        return self.entry(self.optimal_k)[1]

    def f1_for(self, k: int) -> float:
        return self.entry(k)[1]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "k", "leads", "f1", "optimal"])
        for subset, f1 in self.entries:
            k = len(subset)
            w.writerow([self.target, k, " ".join(LEADS[i] for i in subset), f"{f1:.6f}",
                        int(k == self.optimal_k)])
        return buf.getvalue()


def choose_optimal(f1s: list[float], improvement_tol: float) -> int:
    """First position (1-based) whose F1 no later entry beats by ``improvement_tol`` or more."""
    for k, base in enumerate(f1s, start=1):
        if all(later - base < improvement_tol for later in f1s[k:]):
            return k
    return len(f1s)


def sweep_subsets(ranking: LeadRanking, train: Split, val: Split, test: Split,
                  arch: ArchConfig, cfg: TrainConfig, improvement_tol: float = 0.005,
                  ks=None, seed: int | None = None) -> SubsetSweepResult:
    """Retrain from scratch on each top-k prefix of the ranking and score test F1.

    k = 1 uses the single-lead architecture. Each k gets its own seed
    (``seed + k``) for both initialization and batch order.
    """
    ks = list(range(1, len(LEADS) + 1)) if ks is None else sorted(ks)
    base_seed = cfg.seed if seed is None else seed
    result = SubsetSweepResult(ranking.target)
    base = replace(arch, variant="full")
    for k in ks:
        subset = sorted(ranking.order[:k])
        sub_arch = base.with_leads(subset)
        try:
            model = init_parameters(sub_arch, ranking.target, seed=base_seed + k)
            best, _ = train_binary(model, train, val, replace(cfg, seed=base_seed + k))
        except AtcnnError as exc:
            raise type(exc)(f"lead subset k={k} ({[LEADS[i] for i in subset]}): {exc}") from exc
        f1 = f1_score(predict_proba(best, test.X) >= 0.5, test.y)
        log.info("%s k=%d leads=%s F1=%.4f", ranking.target, k, [LEADS[i] for i in subset], f1)
        # report subsets in ranking order
        result.entries.append((list(ranking.order[:k]), f1))
    pos = choose_optimal([f for _, f in result.entries], improvement_tol)
    result.optimal_k = len(result.entries[pos - 1][0])
    return result
