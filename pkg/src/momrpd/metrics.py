"""Quality measures of a policy set over normalized cost distributions."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .statcosts import CostSampleSet, hypothesis_error, normalize_costs

SEGMENT_POINTS = 101
MC_SAMPLES = 100_000


def dominates(a: np.ndarray, b: np.ndarray) -> bool:
    """a dominates b: a <= b everywhere and a < b somewhere."""
    return bool(np.all(a <= b) and np.any(a < b))


def metric_hypothesis_error(sets: Sequence[CostSampleSet]) -> tuple[list[float], float]:
    """Per unordered pair the larger of the two directed errors, and their mean."""
    if len(sets) < 2:
        raise ValueError("hypothesis error needs at least 2 sets")
    pairs = []
    for i in range(len(sets)):
        for j in range(i + 1, len(sets)):
            pairs.append(max(hypothesis_error(sets[i], sets[j]), hypothesis_error(sets[j], sets[i])))
    return pairs, float(np.mean(pairs))


def metric_dispersion(means: Sequence[np.ndarray], resolution: int = SEGMENT_POINTS) -> float:
    """Radius of the largest mean-free ball centred on a non-dominated point of a
    segment between two means."""
    mu = np.vstack([np.asarray(m, dtype=float) for m in means])
    k = len(mu)
    if k < 2:
        raise ValueError("dispersion needs at least 2 means")
    ts = np.linspace(0.0, 1.0, resolution)[:, None]
    best = 0.0
    for i in range(k):
        for j in range(i + 1, k):
            pts = mu[i] + ts * (mu[j] - mu[i])
            # dominated[p, q]: mean q dominates point p
            le = np.all(mu[None, :, :] <= pts[:, None, :], axis=2)
            lt = np.any(mu[None, :, :] < pts[:, None, :], axis=2)
            valid = ~np.any(le & lt, axis=1)
            if not valid.any():
                continue
            dist = np.linalg.norm(pts[valid][:, None, :] - mu[None, :, :], axis=2).min(axis=1)
            best = max(best, float(dist.max()))
    return best


def minimum_spanning_tree(points: np.ndarray) -> list[tuple[int, int, float]]:
    """Prim's algorithm on the complete Euclidean graph; ties go to the lower index."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    k = len(pts)
    in_tree = [False] * k
    dist = np.full(k, np.inf)
    parent = [-1] * k
    dist[0] = 0.0
    edges = []
    for _ in range(k):
        cand = [i for i in range(k) if not in_tree[i]]
        u = min(cand, key=lambda i: (dist[i], i))
        in_tree[u] = True
        if parent[u] >= 0:
            edges.append((min(parent[u], u), max(parent[u], u), float(dist[u])))
        for v in range(k):
            if not in_tree[v]:
                d = float(np.linalg.norm(pts[u] - pts[v]))
                if d < dist[v] or (d == dist[v] and u < parent[v]):
                    dist[v] = d
                    parent[v] = u
    return edges


def metric_variance(means: Sequence[np.ndarray]) -> float:
    """Population variance of the MST edge lengths."""
    if len(means) < 2:
        raise ValueError("variance needs at least 2 means")
    lengths = [e[2] for e in minimum_spanning_tree(np.vstack([np.atleast_1d(m) for m in means]))]
    return float(np.var(lengths))


def metric_coverage(means: Sequence[np.ndarray], mc_samples: int = MC_SAMPLES, seed: int = 0) -> float:
    """Monte-Carlo volume of [0,1]^n not dominated by any mean."""
    mu = np.vstack([np.atleast_1d(np.asarray(m, dtype=float)) for m in means])
    rng = np.random.default_rng(seed)
    x = rng.random((mc_samples, mu.shape[1]))
    dominated = np.zeros(mc_samples, dtype=bool)
    for m in mu:
        dominated |= np.all(m <= x, axis=1) & np.any(m < x, axis=1)
    return float(1.0 - dominated.mean())


@dataclass
class MetricsReport:
    method: str
    scenario: str
    K: int
    eta_test: int
    hypothesis_pairs: list[float]
    hypothesis_error: float
    dispersion: float
    variance: float
    coverage: float
    coverage_normalized: float | None = None
    seed: int = 0
    n_objectives: int = 2
    accepted: int = 0
    budget_used: int = 0
    weights: list[list[float]] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "MetricsReport":
        return cls(**json.loads(text))


def evaluate_policy_set(
    test_sets: Sequence[CostSampleSet],
    uni_a_reference: float | None = None,
    *,
    method: str = "",
    scenario: str = "",
    K: int = 0,
    seed: int = 0,
    mc_samples: int = MC_SAMPLES,
    budget_used: int = 0,
) -> MetricsReport:
    """All four measures on jointly normalized test-instance distributions.

    ``uni_a_reference`` is the Uni-A coverage of the same experiment cell;
    without it only raw coverage is reported.
    """
    sets = normalize_costs(test_sets)
    means = [s.mean for s in sets]
    pairs, h_mean = metric_hypothesis_error(sets)
    cov = metric_coverage(means, mc_samples, seed)
    cov_norm = None
    if uni_a_reference is not None and uni_a_reference > 0:
        cov_norm = cov / uni_a_reference
    report = MetricsReport(
        method=method,
        scenario=scenario,
        K=K,
        eta_test=sets[0].eta,
        hypothesis_pairs=pairs,
        hypothesis_error=h_mean,
        dispersion=metric_dispersion(means),
        variance=metric_variance(means),
        coverage=cov,
        coverage_normalized=cov_norm,
        seed=seed,
        n_objectives=sets[0].n,
        accepted=len(sets),
        budget_used=budget_used,
        weights=[s.weight.as_list() if s.weight is not None else [] for s in sets],
    )
    for name in ("hypothesis_error", "dispersion", "variance", "coverage"):
        if not math.isfinite(getattr(report, name)):
            raise ValueError(f"metric {name} is not finite")
    return report
