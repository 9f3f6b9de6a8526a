"""Low-rank adapter arithmetic: parameter counting, reduction ratios, and
toy-scale weight merging (W = W0 + B@A), with the size-based rank rule used
for the fine-tuned model catalog."""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .domain import DomainError

RANK_SMALL = 16
RANK_LARGE = 32
RANK_THRESHOLD_PARAMS = 3_000_000_000
DEFAULT_ALPHA = 32.0
DEFAULT_DROPOUT = 0.05


class LoraError(DomainError):
    pass


@dataclass(frozen=True)
class LayerShape:
    name: str
    d: int
    k: int

    def __post_init__(self):
        if self.d < 1 or self.k < 1:
            raise LoraError("BAD_SHAPE", "layer dimensions must be >= 1")


@dataclass(frozen=True)
class LoraSpec:
    rank: int
    alpha: float = DEFAULT_ALPHA
    dropout: float = DEFAULT_DROPOUT

    def __post_init__(self):
        if self.rank < 1:
            raise LoraError("BAD_RANK", "rank must be >= 1")


def trainable_params(shape: LayerShape, spec: LoraSpec) -> int:
    """Adapter parameter count for one layer: r*(d + k)."""
    return spec.rank * (shape.d + shape.k)


def reduction_ratio(shape: LayerShape, spec: LoraSpec) -> float:
    """Percentage reduction in trainable parameters versus the full d*k layer."""
    return 100.0 * (1.0 - trainable_params(shape, spec) / (shape.d * shape.k))


def rank_for_model(param_count: int) -> LoraSpec:
    """Size-based rank rule: r=16 up to 3B parameters, r=32 above."""
    if param_count <= 0:
        raise LoraError("BAD_PARAM_COUNT", "model parameter count must be > 0")
    rank = RANK_SMALL if param_count <= RANK_THRESHOLD_PARAMS else RANK_LARGE
    return LoraSpec(rank=rank)


def is_low_rank(shape: LayerShape, spec: LoraSpec) -> bool:
    """True when r is genuinely small relative to the layer (r << min(d, k));
    callers treat False as a warning, not an error."""
    return spec.rank * 4 <= min(shape.d, shape.k)


def merge_weights(w0, b, a, *, alpha_over_rank: float | None = None) -> np.ndarray:
    """Merge an adapter into frozen weights: W0 + B@A.

    The literal merge has no scaling; pass alpha_over_rank to apply the
    conventional alpha/r scaling to the BA term instead.
    """
    w0 = np.asarray(w0, dtype=float)
    b = np.asarray(b, dtype=float)
    a = np.asarray(a, dtype=float)
    if w0.ndim != 2 or b.ndim != 2 or a.ndim != 2:
        raise LoraError("DIM_MISMATCH", "all inputs must be matrices")
    if b.shape[0] != w0.shape[0] or a.shape[1] != w0.shape[1] or b.shape[1] != a.shape[0]:
        raise LoraError("DIM_MISMATCH",
                        f"shapes not conformant: W0 {w0.shape}, B {b.shape}, A {a.shape}")
    delta = b @ a
    if alpha_over_rank is not None:
        delta = alpha_over_rank * delta
    return w0 + delta


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    family: str
    params: int
    context_length: int
    type: str  # teacher | learner
    hidden_dim: int | None = None
    ffn_dim: int | None = None


def load_catalog() -> list[CatalogEntry]:
    raw = json.loads(resources.files("outreachlab.fixtures").joinpath("model_catalog.json").read_text())
    return [CatalogEntry(**e) for e in raw["models"]]


def catalog_reduction_report() -> list[dict]:
    """Per-learner reduction ratios at the rule-assigned rank, using each
    model's MLP projection shape (hidden x ffn)."""
    out = []
    for entry in load_catalog():
        if entry.type != "learner" or not entry.hidden_dim or not entry.ffn_dim:
            continue
        spec = rank_for_model(entry.params)
        shape = LayerShape(name=f"{entry.name}/mlp", d=entry.hidden_dim, k=entry.ffn_dim)
        out.append({
            "model": entry.name,
            "rank": spec.rank,
            "layer_shape": [shape.d, shape.k],
            "trainable_params": trainable_params(shape, spec),
            "reduction_percent": reduction_ratio(shape, spec),
        })
    return out
