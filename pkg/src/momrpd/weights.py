"""Scalarization weights on the probability simplex.

Weights are stored as integer numerators over ``2**FRACTION_BITS`` so that
bisection midpoints, edge keys and cache keys are exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

FRACTION_BITS = 12
SCALE = 1 << FRACTION_BITS


@dataclass(frozen=True, order=True)
class WeightVector:
    key: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.key) < 1:
            raise ValueError("weight vector must have at least one entry")
        if any(k < 0 for k in self.key):
            raise ValueError(f"weights must be nonnegative: {self.key}")
        if sum(self.key) != SCALE:
            raise ValueError(f"weights must sum to 1: {self.key}")

    @classmethod
    def from_values(cls, values: Iterable[float]) -> "WeightVector":
        vals = [float(v) for v in values]
        if any(v < -1e-12 for v in vals):
            raise ValueError(f"weights must be nonnegative: {vals}")
        total = sum(vals)
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"weights must sum to 1 (got {total!r})")
        key = [int(round(max(v, 0.0) * SCALE)) for v in vals]
        # put the rounding residue on the largest coordinate
        residue = SCALE - sum(key)
        if residue:
            i = max(range(len(key)), key=lambda j: (key[j], -j))
            key[i] += residue
        return cls(tuple(key))

    @classmethod
    def basis(cls, n: int, i: int) -> "WeightVector":
        key = [0] * n
        key[i] = SCALE
        return cls(tuple(key))

    @property
    def n(self) -> int:
        return len(self.key)

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.key, dtype=float) / SCALE

    def as_list(self) -> list[float]:
        return [k / SCALE for k in self.key]

    def __getitem__(self, i: int) -> float:
        return self.key[i] / SCALE

    def __len__(self) -> int:
        return len(self.key)

    def __repr__(self) -> str:
        return "W[" + ", ".join(f"{k / SCALE:.6g}" for k in self.key) + "]"


def midpoint(a: WeightVector, b: WeightVector) -> WeightVector | None:
    """Exact midpoint of two weights, or None if it needs more fraction bits."""
    if a.n != b.n:
        raise ValueError("dimension mismatch")
    sums = [x + y for x, y in zip(a.key, b.key)]
    if any(s % 2 for s in sums):
        return None
    return WeightVector(tuple(s // 2 for s in sums))


def edge_key(a: WeightVector, b: WeightVector) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Order-independent key of the unordered pair (a, b)."""
    return (a.key, b.key) if a.key <= b.key else (b.key, a.key)


def as_weight(w: WeightVector | Sequence[float]) -> WeightVector:
    return w if isinstance(w, WeightVector) else WeightVector.from_values(w)
