"""ECG lead preprocessing: Butterworth bandpass followed by per-lead z-score."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .errors import ContractError, DimensionError, FilterSpecError

N_LEADS = 12


@dataclass(frozen=True)
class FilterSpec:
    low_hz: float = 0.5
    high_hz: float = 45.0
    order: int = 4
    sampling_rate_hz: float = 100.0
    mode: str = "forward-backward"  # or "forward"

    def __post_init__(self):
        nyquist = self.sampling_rate_hz / 2
        if not 0 < self.low_hz < self.high_hz < nyquist:
            raise FilterSpecError(
                f"need 0 < low ({self.low_hz}) < high ({self.high_hz}) < Nyquist ({nyquist})")
        if self.order < 1:
            raise FilterSpecError(f"filter order must be >= 1, got {self.order}")
        if self.mode not in ("forward", "forward-backward"):
            raise FilterSpecError(f"unknown filter mode {self.mode!r}")

    def sos(self) -> np.ndarray:
        return sps.butter(self.order, [self.low_hz, self.high_hz], btype="bandpass",
                          fs=self.sampling_rate_hz, output="sos")


def butterworth_bandpass(x, spec: FilterSpec = FilterSpec()) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError(f"expected a 1-D sequence, got shape {x.shape}")
    if len(x) < 3 * spec.order:
        raise ContractError(f"sequence of length {len(x)} is shorter than 3 x filter order ({spec.order})")
    sos = spec.sos()
    if spec.mode == "forward":
        return sps.sosfilt(sos, x)
    # scipy's default pad length can exceed short records
    padlen = min(3 * (2 * len(sos) + 1), len(x) - 1)
    return sps.sosfiltfilt(sos, x, padlen=padlen)


def zscore(x) -> np.ndarray:
    """Zero mean, unit population std. Constant input maps to zeros."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or len(x) < 2:
        raise ContractError(f"z-score needs a 1-D sequence of length >= 2, got shape {x.shape}")
    centered = x - x.mean()
    sd = np.sqrt(np.mean(centered * centered))
    if sd <= 1e-12 * max(1.0, np.abs(x).max()):
        return np.zeros_like(x)
    return centered / sd


def preprocess_record(raw, spec: FilterSpec = FilterSpec()) -> np.ndarray:
    raw = np.asarray(raw, dtype=np.float64)
    if raw.ndim != 2 or raw.shape[0] != N_LEADS or raw.shape[1] == 0:
        raise DimensionError(f"expected a {N_LEADS} x T record, got shape {raw.shape}")
    return np.stack([zscore(butterworth_bandpass(lead, spec)) for lead in raw])
