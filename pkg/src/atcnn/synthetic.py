"""Synthetic 12-lead pseudo-ECG with lead-localized pathology patterns.

Each beat is a sum of Gaussian bumps (P, Q, R, S, T) scaled by a per-lead
gain. Disease classes inject one morphology change on a fixed set of leads,
so the informative leads and time windows are known exactly. This is a
test bed for the learning machinery, not a physiological simulator.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constants import CLASS_INDEX, CLASSES, LEADS, lead_index
from .data import EcgRecord
from .errors import ConfigError

FEATURES = ("broad-QRS", "ST-elevation", "tall-R", "ST-depression")

# (centre offset s, width s, amplitude) relative to the R peak
WAVES = {
    "P": (-0.18, 0.025, 0.12),
    "Q": (-0.035, 0.010, -0.12),
    "R": (0.0, 0.012, 1.0),
    "S": (0.035, 0.010, -0.30),
    "T": (0.28, 0.045, 0.30),
}
LEAD_GAINS = (0.8, 1.0, 0.5, -0.8, 0.4, 0.7, 0.6, 0.8, 1.0, 1.1, 1.0, 0.9)

# a sample belongs to a feature window when the injected beat differs from
# the clean beat by more than this fraction of the lead gain
MASK_FRACTION = 0.05


@dataclass(frozen=True)
class Injection:
    leads: tuple[int, ...]
    feature: str
    magnitude: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "leads", tuple(lead_index(l) for l in self.leads))
        if self.feature not in FEATURES:
            raise ConfigError(f"unknown feature {self.feature!r}; expected one of {FEATURES}")
        if not self.leads:
            raise ConfigError("injection needs at least one lead")
        if self.magnitude <= 0:
            raise ConfigError(f"injection magnitude must be > 0, got {self.magnitude}")


def _default_injections() -> dict[str, tuple[Injection, ...]]:
    return {
        "CD": (Injection(("V1", "aVL"), "broad-QRS"),),
        "HYP": (Injection(("V5", "V6"), "tall-R"),),
        "MI": (Injection(("II", "aVF"), "ST-elevation"),),
        "STTC": (Injection(("I", "aVR"), "ST-depression"),),
    }


@dataclass
class SyntheticSpec:
    n_samples: int = 500
    sampling_rate: float = 100.0
    heart_rate_bpm: tuple[float, float] = (60.0, 90.0)
    lead_gains: tuple[float, ...] = LEAD_GAINS
    gain_jitter: float = 0.15
    injections: dict[str, tuple[Injection, ...]] = field(default_factory=_default_injections)
    noise_std: float = 0.05
    baseline_wander: float = 0.1
    nsr_fraction: float = 0.25
    multi_label_fraction: float = 0.2
    test_fraction: float = 0.2
    seed: int = 0
    id_prefix: str = "syn"

    def validate(self):
        if len(self.lead_gains) != len(LEADS):
            raise ConfigError("lead_gains needs one entry per lead")
        for cls in self.injections:
            if cls not in CLASS_INDEX or cls == "NSR":
                raise ConfigError(f"injections must target disease classes, got {cls!r}")
        if not 0 <= self.nsr_fraction <= 1 or not 0 <= self.multi_label_fraction <= 1:
            raise ConfigError("fractions must lie in [0, 1]")
        if self.nsr_fraction + self.multi_label_fraction > 1:
            raise ConfigError("nsr_fraction + multi_label_fraction must not exceed 1")
        if self.noise_std < 0 or self.n_samples < 1:
            raise ConfigError("invalid noise level or length")


def single_lead_spec(target: str = "CD", lead="V1", feature: str = "broad-QRS", **kw) -> SyntheticSpec:
    """Dataset where one class is carried by one lead and every other record is NSR."""
    kw.setdefault("nsr_fraction", 0.5)
    kw.setdefault("multi_label_fraction", 0.0)
    return SyntheticSpec(injections={target: (Injection((lead,), feature),)}, **kw)


def _bump(t, centre, width, amp):
    return amp * np.exp(-0.5 * ((t - centre) / width) ** 2)


def _plateau(t, start, stop, amp, edge=0.015):
    rise = 1 / (1 + np.exp(-(t - start) / edge))
    fall = 1 / (1 + np.exp((t - stop) / edge))
    return amp * rise * fall


def _beat(t_rel, gain, features: list[tuple[str, float]]):
    w = {k: list(v) for k, v in WAVES.items()}
    extra = np.zeros_like(t_rel)
    for feat, m in features:
        if feat == "broad-QRS":
            w["R"][1] *= 1 + m
            w["S"][1] *= 1 + m
            w["S"][0] += 0.02 * m
            extra += _bump(t_rel, 0.075, 0.018, 0.5 * m)
        elif feat == "tall-R":
            w["R"][2] *= 1 + 1.5 * m
            w["S"][2] *= 1 + m
        elif feat == "ST-elevation":
            extra += _plateau(t_rel, 0.06, 0.20, 0.35 * m)
        elif feat == "ST-depression":
            extra += _plateau(t_rel, 0.06, 0.20, -0.3 * m)
            w["T"][2] *= 1 - 1.5 * m
    y = sum(_bump(t_rel, c, s, a) for c, s, a in w.values())
    return gain * y + abs(gain) * extra


def _assign_classes(spec: SyntheticSpec, n: int, rng) -> list[tuple[str, ...]]:
    diseases = [c for c in CLASSES[1:] if c in spec.injections]
    order = rng.permutation(n)
    if not diseases:
        return [()] * n
    n_nsr = int(round(spec.nsr_fraction * n))
    n_multi = int(round(spec.multi_label_fraction * n)) if len(diseases) >= 2 else 0
    n_single = n - n_nsr - n_multi
    sets: list[tuple[str, ...]] = [()] * n_nsr
    sets += [(diseases[i % len(diseases)],) for i in range(n_single)]
    pairs = [(a, b) for i, a in enumerate(diseases) for b in diseases[i + 1:]]
    sets += [pairs[i % len(pairs)] for i in range(n_multi)] if pairs else []
    return [sets[i] for i in order]


def generate_synthetic(spec: SyntheticSpec, n: int, return_masks: bool = False):
    """Generate ``n`` records; optionally also ``(12, T)`` boolean feature-window masks.

    The last ``round(test_fraction * n)`` records form the test partition.
    """
    spec.validate()
    if n < 1:
        raise ConfigError("n must be >= 1")
    rng = np.random.default_rng(spec.seed)
    fs, T = spec.sampling_rate, spec.n_samples
    t = np.arange(T) / fs
    gains = np.asarray(spec.lead_gains)
    n_test = int(round(spec.test_fraction * n))
    class_sets = _assign_classes(spec, n, rng)
    records, masks = [], []
    for i, diseases in enumerate(class_sets):
        rr = 60.0 / rng.uniform(*spec.heart_rate_bpm)
        first = rng.uniform(0.25, 0.25 + rr)
        peaks = np.arange(first, T / fs + 0.5, rr)
        per_lead: list[list[tuple[str, float]]] = [[] for _ in LEADS]
        for cls in diseases:
            for inj in spec.injections[cls]:
                for ld in inj.leads:
                    per_lead[ld].append((inj.feature, inj.magnitude))
        jitter = 1 + spec.gain_jitter * rng.uniform(-1, 1, size=len(LEADS))
        sig = np.zeros((len(LEADS), T))
        mask = np.zeros((len(LEADS), T), dtype=bool)
        for ld in range(len(LEADS)):
            g = gains[ld] * jitter[ld]
            for pk in peaks:
                beat = _beat(t - pk, g, per_lead[ld])
                sig[ld] += beat
                if per_lead[ld]:
                    diff = np.abs(beat - _beat(t - pk, g, []))
                    mask[ld] |= diff > MASK_FRACTION * abs(g)
        wander_f = rng.uniform(0.15, 0.4)
        wander_phase = rng.uniform(0, 2 * np.pi, size=len(LEADS))
        sig += spec.baseline_wander * np.sin(2 * np.pi * wander_f * t + wander_phase[:, None])
        sig += spec.noise_std * rng.standard_normal(sig.shape)
        labels = np.zeros(len(CLASSES), dtype=np.uint8)
        if diseases:
            for cls in diseases:
                labels[CLASS_INDEX[cls]] = 1
        else:
            labels[CLASS_INDEX["NSR"]] = 1
        part = "test" if i >= n - n_test else "development"
        records.append(EcgRecord(f"{spec.id_prefix}{i:05d}", sig.astype(np.float32), labels,
                                 spec.sampling_rate, part))
        masks.append(mask)
    return (records, masks) if return_masks else records
