"""Symmetric in-batch InfoNCE over English / target-language IPA embeddings."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import EmptyBatch, NonPositiveTemperature, ShapeMismatch
from .numerics import Tensor, add, as_tensor, cross_entropy, matmul, scale, transpose

DEFAULT_TEMPERATURE = 0.1
DIRECTIONS = ("e2t", "t2e")


@dataclass
class PairBatch:
    """Row ``i`` of ``z_e`` and row ``i`` of ``z_t`` form a positive pair; every other row is a negative."""

    z_e: Tensor
    z_t: Tensor
    temperature: float = DEFAULT_TEMPERATURE
    pair_ids: Sequence[int] = field(default_factory=tuple)

    def __post_init__(self):
        self.z_e = as_tensor(self.z_e)
        self.z_t = as_tensor(self.z_t)
        _validate(self)

    @property
    def size(self) -> int:
        return self.z_e.shape[0]


def _validate(batch: PairBatch) -> None:
    if not batch.temperature > 0:
        raise NonPositiveTemperature(f"temperature must be positive, got {batch.temperature}")
    if batch.z_e.data.ndim != 2 or batch.z_e.shape != batch.z_t.shape:
        raise ShapeMismatch(f"z_e {batch.z_e.shape} and z_t {batch.z_t.shape} must be equal N x d")
    if batch.z_e.shape[0] == 0:
        raise EmptyBatch("a pair batch needs at least one pair")


def _roles(batch: PairBatch, direction: str) -> tuple[Tensor, Tensor]:
    if direction == "e2t":
        return batch.z_e, batch.z_t
    if direction == "t2e":
        return batch.z_t, batch.z_e
    raise ValueError(f"direction must be one of {DIRECTIONS}, got {direction!r}")


def info_nce(batch: PairBatch, direction: str = "e2t") -> Tensor:
    """Mean over anchors of ``-log softmax(<anchor_i, candidate_k> / temperature)[i]``."""
    _validate(batch)
    anchors, candidates = _roles(batch, direction)
    logits = scale(matmul(anchors, transpose(candidates)), 1.0 / batch.temperature)
    return cross_entropy(logits, np.arange(batch.size))


def ipac_loss(batch: PairBatch) -> Tensor:
    """Average of the two directional InfoNCE losses."""
    return scale(add(info_nce(batch, "e2t"), info_nce(batch, "t2e")), 0.5)


def brute_force_info_nce(batch: PairBatch, direction: str = "e2t") -> float:
    """Loop-only reference for :func:`info_nce`; meant for small batches in tests."""
    _validate(batch)
    if batch.size > 64:
        raise ValueError("brute-force oracle is limited to N <= 64")
    anchors, candidates = _roles(batch, direction)
    a = anchors.data.tolist()
    c = candidates.data.tolist()
    n, d = len(a), len(a[0])
    tau = float(batch.temperature)
    total = 0.0
    for i in range(n):
        logits = []
        for k in range(n):
            dot = 0.0
            for j in range(d):
                dot += a[i][j] * c[k][j]
            logits.append(dot / tau)
        m = max(logits)
        denom = 0.0
        for k in range(n):
            denom += math.exp(logits[k] - m)
        total += -(logits[i] - m - math.log(denom))
    return total / n


def brute_force_ipac(batch: PairBatch) -> float:
    return 0.5 * (brute_force_info_nce(batch, "e2t") + brute_force_info_nce(batch, "t2e"))
