"""Attention-based temporal convolutional network for one binary target.

Internal activations use the layout ``(lead, channel, batch, time)`` so the
per-lead filter banks of all leads run as one grouped matmul.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import numerics as nx
from .constants import CLASSES, LEADS
from .errors import ConfigError, DimensionError, NumericInputError
from .numerics import Tensor

VARIANTS = ("full", "traditional_conv", "no_attention_gap", "single_lead")


@dataclass(frozen=True)
class ArchConfig:
    input_length: int = 1000
    channels: int = 32
    kernel_size: int = 3
    num_blocks: int = 3
    dilations: tuple[int, ...] = (1, 2, 4)
    variant: str = "full"
    lead_mask: tuple[int, ...] = tuple(range(12))
    temporal_bias: str = "per_step"  # "per_step" (one bias per time step) or "scalar"
    residual: bool = False  # reserved
    dtype: str = "float32"

    def __post_init__(self):
        object.__setattr__(self, "dilations", tuple(int(d) for d in self.dilations))
        object.__setattr__(self, "lead_mask", tuple(int(i) for i in self.lead_mask))
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if len(self.dilations) != self.num_blocks:
            raise ConfigError(f"{self.num_blocks} blocks but {len(self.dilations)} dilations")
        if any(d < 1 for d in self.dilations) or any(b <= a for a, b in zip(self.dilations, self.dilations[1:])):
            raise ConfigError(f"dilations must be positive and strictly increasing, got {self.dilations}")
        if self.kernel_size < 2:
            raise ConfigError(f"kernel_size must be >= 2, got {self.kernel_size}")
        if self.channels < 1 or self.input_length < 1:
            raise ConfigError("channels and input_length must be >= 1")
        mask = self.lead_mask
        if not mask:
            raise ConfigError("lead_mask must not be empty")
        if list(mask) != sorted(set(mask)) or not all(0 <= i < len(LEADS) for i in mask):
            raise ConfigError(f"lead_mask must hold sorted, unique lead indices in [0, 12), got {mask}")
        if self.variant == "single_lead" and len(mask) != 1:
            raise ConfigError(f"single_lead variant needs exactly one lead, got {len(mask)}")
        if self.temporal_bias not in ("per_step", "scalar"):
            raise ConfigError(f"unknown temporal_bias {self.temporal_bias!r}")
        if self.residual:
            raise ConfigError("residual connections are reserved and not implemented")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"unsupported dtype {self.dtype!r}")

    @property
    def n_leads(self) -> int:
        return len(self.lead_mask)

    @property
    def layer_dilations(self) -> tuple[int, ...]:
        """Dilation of every conv layer; two layers per block."""
        per_block = (1,) * self.num_blocks if self.variant == "traditional_conv" else self.dilations
        return tuple(d for d in per_block for _ in range(2))

    def with_leads(self, leads) -> "ArchConfig":
        leads = tuple(sorted(int(i) for i in leads))
        variant = "single_lead" if len(leads) == 1 and self.variant == "full" else self.variant
        if len(leads) > 1 and variant == "single_lead":
            variant = "full"
        return replace(self, lead_mask=leads, variant=variant)

    def to_dict(self) -> dict:
        return {
            "input_length": self.input_length, "channels": self.channels,
            "kernel_size": self.kernel_size, "num_blocks": self.num_blocks,
            "dilations": list(self.dilations), "variant": self.variant,
            "lead_mask": list(self.lead_mask), "temporal_bias": self.temporal_bias,
            "residual": self.residual, "dtype": self.dtype,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArchConfig":
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


def receptive_field(kernel_size: int, dilation: int) -> int:
    """Span of input samples seen by one dilated causal layer."""
    if kernel_size < 1 or dilation < 1:
        raise ValueError("kernel_size and dilation must be >= 1")
    return (kernel_size - 1) * dilation + 1


def stack_receptive_field(config: ArchConfig) -> int:
    return 1 + sum((config.kernel_size - 1) * d for d in config.layer_dilations)


@dataclass
class AtcnnModel:
    config: ArchConfig
    target: str
    params: dict[str, Tensor] = field(default_factory=dict)

    def __post_init__(self):
        if self.target not in CLASSES:
            raise ConfigError(f"unknown target class {self.target!r}")

    def parameters(self) -> list[Tensor]:
        return list(self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None

    def copy(self) -> "AtcnnModel":
        return AtcnnModel(self.config, self.target,
                          {k: Tensor(v.data.copy(), requires_grad=v.requires_grad, name=k)
                           for k, v in self.params.items()})

    def state(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state(self, state: dict[str, np.ndarray]):
        for k, v in state.items():
            self.params[k].data[...] = v


def parameter_shapes(config: ArchConfig) -> dict[str, tuple[int, ...]]:
    M, Z, K = config.n_leads, config.channels, config.kernel_size
    shapes: dict[str, tuple[int, ...]] = {}
    c_in = 1
    for j in range(2 * config.num_blocks):
        shapes[f"conv{j}.w"] = (M, Z, c_in, K)
        shapes[f"conv{j}.b"] = (M, Z)
        c_in = Z
    if config.variant == "no_attention_gap":
        shapes["head.w"] = (2, M * Z)
    else:
        shapes["temporal.w"] = (M, Z)
        shapes["temporal.b"] = (M, config.input_length if config.temporal_bias == "per_step" else 1)
        if config.variant != "single_lead":
            shapes["spatial.w"] = (Z,)
            shapes["spatial.b"] = (M,)
        shapes["head.w"] = (2, Z)
    shapes["head.b"] = (2,)
    return shapes


def _fan_in(name: str, shape: tuple[int, ...]) -> int:
    if name.startswith("conv"):
        return shape[2] * shape[3]
    return shape[-1]


ATTENTION_INIT_SCALE = 0.1


def init_parameters(config: ArchConfig, target: str = "NSR", seed: int = 0) -> AtcnnModel:
    """Fan-in scaled uniform weights, zero biases, drawn from PCG64(seed).

    The attention scoring vectors get a bound ``ATTENTION_INIT_SCALE`` times
    smaller so both attention layers start near uniform: at full scale
    ``tanh`` saturates on the ReLU features and the attention barely trains.
    """
    rng = np.random.default_rng(seed)
    dtype = np.dtype(config.dtype)
    params = {}
    for name, shape in parameter_shapes(config).items():
        if name.endswith(".b"):
            data = np.zeros(shape, dtype=dtype)
        else:
            gain = 6.0 if name.startswith("conv") else 3.0  # He for ReLU layers
            bound = np.sqrt(gain / _fan_in(name, shape))
            if name in ("temporal.w", "spatial.w"):
                bound *= ATTENTION_INIT_SCALE
            data = rng.uniform(-bound, bound, size=shape).astype(dtype)
        params[name] = Tensor(data, requires_grad=True, name=name)
    return AtcnnModel(config, target, params)


# -- single-lead building blocks ---------------------------------------------

def dilated_causal_conv(x, w, d: int = 1) -> np.ndarray:
    """``out[n] = sum_i w[i] * x[n - d*i]`` with zeros before the start."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if x.ndim != 1 or w.ndim != 1 or len(x) < 1 or len(w) < 1:
        raise DimensionError(f"expected 1-D x and w, got {x.shape} and {w.shape}")
    out = nx.causal_conv1d(x.reshape(1, 1, 1, -1), w.reshape(1, 1, 1, -1), dilation=d)
    return out.data.reshape(-1)


def tcnn_block(x, w1, b1, w2, b2, d: int):
    """Two dilated causal conv layers with ReLU. ``x`` is ``(Z_in, T)``.

    Weights are ``(Z, Z_in, K)`` / ``(Z, Z, K)``, biases ``(Z,)``; tensors or arrays.
    """
    x = nx.as_tensor(x)
    if x.ndim != 2:
        raise DimensionError(f"tcnn_block expects (Z_in, T) input, got {x.shape}")
    h = x.reshape(1, x.shape[0], 1, x.shape[1])
    for w, b in ((w1, b1), (w2, b2)):
        w, b = nx.as_tensor(w), nx.as_tensor(b)
        h = nx.relu(nx.causal_conv1d(h, w.reshape((1,) + w.shape), b.reshape(1, -1), dilation=d))
    return h.reshape(h.shape[1], h.shape[3])


def temporal_attention(F, w, b):
    """Attention over time for one lead: ``F (Z, L)``, ``w (Z,)``, ``b (L,)`` or scalar.

    Returns ``(u (Z,), alpha (L,))`` as tensors.
    """
    F, w, b = nx.as_tensor(F), nx.as_tensor(w), nx.as_tensor(b)
    Z, L = F.shape
    if w.reshape(-1).shape != (Z,) or b.data.size not in (1, L):
        raise DimensionError(f"temporal_attention: F {F.shape}, w {w.shape}, b {b.shape}")
    u, alpha = _temporal_attention(F.reshape(1, Z, 1, L), w.reshape(1, Z), b.reshape(1, -1))
    return u.reshape(Z), alpha.reshape(L)


def spatial_attention(S, w, b):
    """Attention over leads: ``S (Z, n)``, ``w (Z,)``, ``b (n,)``. Returns ``(v (Z,), beta (n,))``."""
    S, w, b = nx.as_tensor(S), nx.as_tensor(w), nx.as_tensor(b)
    Z, n = S.shape
    if w.reshape(-1).shape != (Z,) or b.reshape(-1).shape != (n,):
        raise DimensionError(f"spatial_attention: S {S.shape}, w {w.shape}, b {b.shape}")
    v, beta = _spatial_attention(S.transpose(1, 0).reshape(n, 1, Z), w.reshape(Z), b.reshape(n))
    return v.reshape(Z), beta.reshape(n)


# -- batched graph -------------------------------------------------------------

def _temporal_attention(F: Tensor, w: Tensor, b: Tensor):
    # F (M, Z, B, L), w (M, Z), b (M, L) or (M, 1)
    scores = nx.einsum("mzbl,mz->mbl", F, w) + b.reshape(b.shape[0], 1, b.shape[1])
    alpha = nx.softmax(nx.tanh(scores), axis=-1)
    u = nx.einsum("mzbl,mbl->mbz", F, alpha)
    return u, alpha


def _spatial_attention(S: Tensor, w: Tensor, b: Tensor):
    # S (M, B, Z), w (Z,), b (M,)
    scores = nx.einsum("mbz,z->mb", S, w) + b.reshape(b.shape[0], 1)
    beta = nx.softmax(nx.tanh(scores), axis=0)
    v = nx.einsum("mbz,mb->bz", S, beta)
    return v, beta


def _check_batch(model: AtcnnModel, X) -> np.ndarray:
    X = np.asarray(X)
    if X.ndim == 2:
        X = X[None]
    cfg = model.config
    if X.ndim != 3 or X.shape[1] != len(LEADS) or X.shape[2] != cfg.input_length:
        raise DimensionError(
            f"expected records of shape (12, {cfg.input_length}), got {X.shape[-2:] if X.ndim >= 2 else X.shape}")
    if not np.all(np.isfinite(X)):
        raise NumericInputError("records contain non-finite samples")
    return X


def feature_maps(model: AtcnnModel, X, dilations=None) -> Tensor:
    """Per-lead TCNN stack for a batch ``X (B, 12, T)`` -> ``(M, Z, B, T)``.

    ``dilations`` overrides the per-layer dilations (one entry per layer).
    """
    X = _check_batch(model, X)
    cfg = model.config
    x = np.ascontiguousarray(X[:, list(cfg.lead_mask), :].transpose(1, 0, 2)[:, None],
                             dtype=np.dtype(cfg.dtype))
    h = Tensor(x)
    dils = cfg.layer_dilations if dilations is None else tuple(dilations)
    for j, d in enumerate(dils):
        h = nx.relu(nx.causal_conv1d(h, model.params[f"conv{j}.w"], model.params[f"conv{j}.b"], dilation=d))
    return h


def lead_feature_stack(model: AtcnnModel, x_m, lead: int | None = None) -> np.ndarray:
    """Feature maps ``(Z, T)`` of one lead sequence through that lead's TCNN stack."""
    cfg = model.config
    pos = 0 if lead is None else cfg.lead_mask.index(lead)
    h = nx.as_tensor(np.asarray(x_m, dtype=cfg.dtype).reshape(1, -1))
    for blk in range(cfg.num_blocks):
        j = 2 * blk
        ps = [model.params[f"conv{k}.{s}"].data[pos] for k in (j, j + 1) for s in ("w", "b")]
        h = tcnn_block(h, *ps, d=cfg.layer_dilations[j])
    return h.data


@dataclass
class BatchOutput:
    logits: Tensor          # (B, 2)
    probs: Tensor           # (B,) probability of the target class
    alpha: Tensor | None    # (M, B, L)
    beta: Tensor | None     # (M, B)


def forward_batch(model: AtcnnModel, X) -> BatchOutput:
    cfg = model.config
    P = model.params
    F = feature_maps(model, X)
    M, Z, B, L = F.shape
    alpha = beta = None
    if cfg.variant == "no_attention_gap":
        pooled = nx.mean(F, axis=3)                              # (M, Z, B)
        v = pooled.transpose(2, 0, 1).reshape(B, M * Z)
    else:
        u, alpha = _temporal_attention(F, P["temporal.w"], P["temporal.b"])  # u (M, B, Z)
        if cfg.variant == "single_lead":
            v = u.reshape(B, Z)
        else:
            v, beta = _spatial_attention(u, P["spatial.w"], P["spatial.b"])
    logits = nx.einsum("bz,kz->bk", v, P["head.w"]) + P["head.b"]
    probs = nx.softmax(logits, axis=-1)[:, 0]
    return BatchOutput(logits, probs, alpha, beta)


@dataclass
class ForwardTrace:
    """Attention weights and class probability for one or more records.

    ``alpha`` is ``(B, M, L)`` over the masked leads in ``leads`` order; ``beta``
    is ``(B, 12)`` with zeros on excluded leads, or ``None`` when the variant
    has no spatial attention. For a single record the batch axis is dropped.
    """
    p: np.ndarray
    alpha: np.ndarray | None
    beta: np.ndarray | None
    leads: tuple[int, ...]
    p_pair: np.ndarray | None = None


def _trace_from(model: AtcnnModel, out: BatchOutput, squeeze: bool) -> ForwardTrace:
    cfg = model.config
    B = out.probs.shape[0]
    alpha = None if out.alpha is None else out.alpha.data.transpose(1, 0, 2).copy()
    beta = None
    if out.beta is not None:
        beta = np.zeros((B, len(LEADS)), dtype=out.beta.dtype)
        beta[:, list(cfg.lead_mask)] = out.beta.data.T
    pair = nx.softmax(out.logits.data.astype(np.float64), axis=-1).data
    trace = ForwardTrace(out.probs.data.astype(np.float64), alpha, beta, cfg.lead_mask, pair)
    if squeeze:
        trace.p = float(trace.p[0])
        trace.p_pair = trace.p_pair[0]
        trace.alpha = None if alpha is None else alpha[0]
        trace.beta = None if beta is None else beta[0]
    return trace


def forward(model: AtcnnModel, record) -> ForwardTrace:
    """Run a record ``(12, T)`` or a batch ``(B, 12, T)`` without recording gradients."""
    X = np.asarray(record)
    with nx.no_grad():
        out = forward_batch(model, X)
    return _trace_from(model, out, squeeze=X.ndim == 2)


def forward_variant(model: AtcnnModel, record) -> ForwardTrace:
    if model.config.variant == "full":
        raise ConfigError("forward_variant called on a full model; use forward")
    return forward(model, record)


def predict_proba(model: AtcnnModel, X, batch_size: int = 64) -> np.ndarray:
    X = np.asarray(X)
    chunks = []
    with nx.no_grad():
        for start in range(0, len(X), batch_size):
            chunks.append(forward_batch(model, X[start:start + batch_size]).probs.data.astype(np.float64))
    return np.concatenate(chunks) if chunks else np.zeros(0)


def permute_leads(model: AtcnnModel, perm) -> AtcnnModel:
    """Model whose lead ``i`` carries the parameters of lead ``perm[i]``.

    Requires all 12 leads in the mask.
    """
    if model.config.n_leads != len(LEADS):
        raise ConfigError("lead permutation needs a model over all 12 leads")
    perm = list(perm)
    out = model.copy()
    for name, t in out.params.items():
        if name.startswith(("conv", "temporal")) or name == "spatial.b":
            t.data = np.ascontiguousarray(t.data[perm])
    return out
