"""Attention-based temporal convolutional networks for multi-label 12-lead ECG classification."""
from . import numerics
from .constants import CLASSES, DISEASES, LEADS
from .data import EcgRecord, load_dataset, partition_counts, save_dataset
from .ensemble import (
    MultiLabelDecision, MultiLabelEnsemble, predict_batch, predict_multilabel, risk_group, risk_stratify,
)
from .errors import AtcnnError
from .leadselect import LeadRanking, SubsetSweepResult, rank_leads, sweep_subsets
from .metrics import ConfusionCounts, derive_metrics, evaluate, exact_match, roc_curve
from .model import (
    ArchConfig, AtcnnModel, forward, forward_variant, init_parameters, predict_proba, stack_receptive_field,
)
from .serialization import load_model, save_model
from .signal import FilterSpec, butterworth_bandpass, preprocess_record, zscore
from .synthetic import Injection, SyntheticSpec, generate_synthetic, single_lead_spec
from .training import Split, TrainConfig, bce_loss, build_subdataset, train_binary

__version__ = "0.1.0"
