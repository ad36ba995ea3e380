"""Empirical cost distributions, Gaussian KL divergence and the hypothesis error."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .weights import WeightVector

RIDGE_REL = 1e-6
RIDGE_FLOOR = 1e-12


def fit(samples: np.ndarray, ridge: float = RIDGE_REL) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and ridge-regularized sample covariance (divisor eta - 1)."""
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise ValueError(f"need at least 2 samples to fit a distribution, got {x.shape[0]}")
    mu = x.mean(axis=0)
    cov = np.atleast_2d(np.cov(x, rowvar=False, ddof=1))
    cov = 0.5 * (cov + cov.T)
    lam = max(ridge * float(np.mean(np.diag(cov))), RIDGE_FLOOR)
    return mu, cov + lam * np.eye(cov.shape[0])


@dataclass(frozen=True, eq=False)
class CostSampleSet:
    """Cost vectors of one policy over eta task instances, with a Gaussian fit."""

    weight: WeightVector | None
    samples: np.ndarray
    mean: np.ndarray
    cov: np.ndarray

    @classmethod
    def from_samples(
        cls, weight: WeightVector | None, samples: np.ndarray | Sequence[Sequence[float]], ridge: float = RIDGE_REL
    ) -> "CostSampleSet":
        x = np.atleast_2d(np.asarray(samples, dtype=float))
        mu, cov = fit(x, ridge)
        return cls(weight, x, mu, cov)

    @property
    def eta(self) -> int:
        return self.samples.shape[0]

    @property
    def n(self) -> int:
        return self.samples.shape[1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CostSampleSet):
            return NotImplemented
        return (
            self.weight == other.weight
            and np.array_equal(self.samples, other.samples)
            and np.array_equal(self.mean, other.mean)
            and np.array_equal(self.cov, other.cov)
        )

    def to_csv(self) -> str:
        """JSON header line followed by the sample matrix as CSV."""
        buf = io.StringIO()
        header = {
            "weight": None if self.weight is None else self.weight.as_list(),
            "eta": self.eta,
            "n": self.n,
        }
        buf.write("# " + json.dumps(header) + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([f"c{i}" for i in range(self.n)])
        for row in self.samples:
            writer.writerow([repr(float(v)) for v in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "CostSampleSet":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("# "):
            raise ValueError("missing JSON header line")
        header = json.loads(lines[0][2:])
        rows = list(csv.reader(lines[2:]))
        samples = np.array([[float(v) for v in r] for r in rows], dtype=float)
        if samples.shape != (header["eta"], header["n"]):
            raise ValueError(f"sample matrix shape {samples.shape} does not match header")
        w = header["weight"]
        return cls.from_samples(None if w is None else WeightVector.from_values(w), samples)


def gaussian_kl(mu_a: np.ndarray, cov_a: np.ndarray, mu_b: np.ndarray, cov_b: np.ndarray) -> float:
    """KL( N(mu_a, cov_a) || N(mu_b, cov_b) )."""
    mu_a = np.atleast_1d(np.asarray(mu_a, dtype=float))
    mu_b = np.atleast_1d(np.asarray(mu_b, dtype=float))
    cov_a = np.atleast_2d(np.asarray(cov_a, dtype=float))
    cov_b = np.atleast_2d(np.asarray(cov_b, dtype=float))
    k = mu_a.shape[0]
    if mu_b.shape[0] != k or cov_a.shape != (k, k) or cov_b.shape != (k, k):
        raise ValueError("dimension mismatch between distributions")
    diff = mu_b - mu_a
    trace_term = float(np.trace(np.linalg.solve(cov_b, cov_a)))
    maha = float(diff @ np.linalg.solve(cov_b, diff))
    _, logdet_a = np.linalg.slogdet(cov_a)
    _, logdet_b = np.linalg.slogdet(cov_b)
    kl = 0.5 * (trace_term + maha - k + logdet_b - logdet_a)
    return max(kl, 0.0)


def kl_divergence(a: CostSampleSet, b: CostSampleSet) -> float:
    if a.n != b.n:
        raise ValueError(f"dimension mismatch: {a.n} vs {b.n}")
    return gaussian_kl(a.mean, a.cov, b.mean, b.cov)


def hypothesis_error(a: CostSampleSet, b: CostSampleSet) -> float:
    """Probability of confusing ``a`` for ``b``: exp(-KL(a || b))."""
    return math.exp(-kl_divergence(a, b))


def symmetric_hypothesis_error(a: CostSampleSet, b: CostSampleSet) -> float:
    return max(hypothesis_error(a, b), hypothesis_error(b, a))


def normalization_bounds(means: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    """Per-coordinate offset and divisor; degenerate coordinates get divisor 1."""
    m = np.vstack([np.asarray(x, dtype=float) for x in means])
    lo = m.min(axis=0)
    span = m.max(axis=0) - lo
    span[span == 0] = 1.0
    return lo, span


def normalize_costs(sets: Sequence[CostSampleSet]) -> list[CostSampleSet]:
    """Map every sample into the unit box spanned by the min/max of the means."""
    if len(sets) < 2:
        raise ValueError("normalization needs at least 2 sample sets")
    lo, span = normalization_bounds([s.mean for s in sets])
    return [CostSampleSet.from_samples(s.weight, (s.samples - lo) / span) for s in sets]
