"""Adaptive simplex-bisection sampling of scalarization weights (AS).

Each iteration bisects the simplex edge with the largest discounted pairwise
dispersion, evaluates the midpoint policy and keeps it only if its cost
distribution is distinguishable from every accepted policy.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .statcosts import CostSampleSet, hypothesis_error, normalization_bounds
from .weights import WeightVector, edge_key, midpoint

Evaluator = Callable[[WeightVector], CostSampleSet]
Simplex = tuple[WeightVector, ...]

EQ_TOL = 1e-9


def mean_key(mu: np.ndarray) -> tuple[float, ...]:
    return tuple(float(f"{x:.12g}") for x in np.asarray(mu, dtype=float))


def mean_pair_key(a: np.ndarray, b: np.ndarray) -> tuple:
    ka, kb = mean_key(a), mean_key(b)
    return (ka, kb) if ka <= kb else (kb, ka)


def make_simplex(vertices: Iterable[WeightVector]) -> Simplex:
    vs = tuple(sorted(vertices))
    if len({v.key for v in vs}) != len(vs):
        raise ValueError("simplex vertices must be distinct")
    return vs


def simplex_edges(s: Simplex) -> list[tuple[WeightVector, WeightVector]]:
    return list(itertools.combinations(s, 2))


def simplex_volume(s: Simplex) -> float:
    """(n-1)-dimensional volume of the simplex, measured in the first n-1 coordinates."""
    pts = np.array([v.values[:-1] for v in s])
    if len(pts) == 1:
        return 1.0
    mat = pts[1:] - pts[0]
    return abs(float(np.linalg.det(mat))) / math.factorial(mat.shape[0])


@dataclass
class SamplerState:
    n: int
    delta: float
    discount: bool = True
    omega: list[WeightVector] = field(default_factory=list)
    gamma: list[CostSampleSet] = field(default_factory=list)
    simplexes: list[Simplex] = field(default_factory=list)
    ledger: dict = field(default_factory=dict)
    evaluated: dict = field(default_factory=dict)
    budget_used: int = 0
    log: list[dict] = field(default_factory=list)

    def costs(self, w: WeightVector) -> CostSampleSet:
        try:
            return self.evaluated[w.key]
        except KeyError:
            raise KeyError(f"weight {w} has not been evaluated") from None

    def normalized_mean(self, w: WeightVector) -> np.ndarray:
        lo, span = self._bounds()
        return (self.costs(w).mean - lo) / span

    def _bounds(self):
        return normalization_bounds([s.mean for s in self.evaluated.values()])

    def alpha(self, a: WeightVector, b: WeightVector) -> int:
        if not self.discount:
            return 0
        return self.ledger.get(mean_pair_key(self.costs(a).mean, self.costs(b).mean), 0)


def init(n: int, evaluator: Evaluator, delta: float, discount: bool = True) -> SamplerState:
    """Evaluate the basis weights; they form Omega and the initial simplex."""
    if n < 2:
        raise ValueError("need at least 2 objectives")
    if not 0 < delta <= 1:
        raise ValueError("delta must lie in (0, 1]")
    state = SamplerState(n=n, delta=delta, discount=discount)
    for i in range(n):
        w = WeightVector.basis(n, i)
        c = evaluator(w)
        state.evaluated[w.key] = c
        state.omega.append(w)
        state.gamma.append(c)
        state.budget_used += 1
    state.simplexes.append(make_simplex(state.omega))
    return state


def distinct(state: SamplerState, a: WeightVector, b: WeightVector) -> bool:
    """H-test outcome for an edge: both directed errors at most delta."""
    ca, cb = state.costs(a), state.costs(b)
    return max(hypothesis_error(ca, cb), hypothesis_error(cb, ca)) <= state.delta


def discounted_dispersion(state: SamplerState, edge: tuple[WeightVector, WeightVector]) -> float:
    a, b = edge
    if not distinct(state, a, b):
        return 0.0
    gap = float(np.linalg.norm(state.normalized_mean(a) - state.normalized_mean(b)))
    return gap / (2 ** state.alpha(a, b))


def _candidate_edges(state: SamplerState):
    seen = {}
    for s in state.simplexes:
        for a, b in simplex_edges(s):
            k = edge_key(a, b)
            if k not in seen:
                seen[k] = (a, b) if a.key <= b.key else (b, a)
    return [seen[k] for k in sorted(seen)]


def find_new_weight(state: SamplerState) -> tuple[WeightVector, tuple[WeightVector, WeightVector], float] | None:
    """Midpoint of the edge maximizing the discounted dispersion, the edge and
    its value; None when every edge is dead."""
    best = None
    best_d = 0.0
    for a, b in _candidate_edges(state):
        m = midpoint(a, b)
        if m is None:  # finer than the weight quantization
            continue
        d = discounted_dispersion(state, (a, b))
        if d > best_d * (1 + 1e-12) + 1e-15:
            best, best_d = (m, (a, b)), d
    if best is None:
        return None
    return best[0], best[1], best_d


def update(state: SamplerState, w_new: WeightVector, costs: CostSampleSet) -> dict:
    """Split every simplex having ``w_new`` as an edge midpoint, update the
    discount ledger and apply the acceptance test. Returns an audit record."""
    splits = []
    kept = []
    parent = None
    for s in state.simplexes:
        hit = None
        for a, b in simplex_edges(s):
            if midpoint(a, b) == w_new:
                hit = (a, b)
                break
        if hit is None:
            kept.append(s)
            continue
        a, b = hit
        parent = parent or hit
        kept.append(make_simplex([w_new if v == a else v for v in s]))
        kept.append(make_simplex([w_new if v == b else v for v in s]))
        splits.append([v.as_list() for v in s])
    if not splits:
        raise ValueError(f"{w_new} is not the midpoint of any simplex edge")
    state.simplexes = kept
    fresh = w_new.key not in state.evaluated
    state.evaluated[w_new.key] = costs

    a, b = parent
    lo, span = state._bounds()
    mu_new = (costs.mean - lo) / span
    alpha_key = None
    for end in (a, b):
        mu_end = (state.costs(end).mean - lo) / span
        if np.all(np.abs(mu_new - mu_end) <= EQ_TOL):
            alpha_key = mean_pair_key(state.costs(a).mean, state.costs(b).mean)
            state.ledger[alpha_key] = state.ledger.get(alpha_key, 0) + 1
            break

    h_tests = []
    accepted = False
    if fresh and w_new not in state.omega:
        accepted = True
        for w in state.omega:
            h = hypothesis_error(costs, state.costs(w))
            h_tests.append({"against": w.as_list(), "h": h})
            if h > state.delta:
                accepted = False
        if accepted:
            state.omega.append(w_new)
            state.gamma.append(costs)
    return {
        "candidate": w_new.as_list(),
        "parent_edge": [a.as_list(), b.as_list()],
        "h_tests": h_tests,
        "accepted": accepted,
        "alpha_increment": None if alpha_key is None else [list(alpha_key[0]), list(alpha_key[1])],
        "splits": splits,
    }


@dataclass
class SamplerResult:
    omega: list[WeightVector]
    gamma: list[CostSampleSet]
    log: list[dict]
    state: SamplerState
    method: str = "AS"

    @property
    def budget_used(self) -> int:
        return self.state.budget_used


def run(
    evaluator: Evaluator, n: int, K: int, delta: float, discount: bool = True, max_iterations: int | None = None
) -> SamplerResult:
    """Adaptive sampling with evaluation budget K (basis evaluations included)."""
    if K < n:
        raise ValueError("budget K must be at least n")
    state = init(n, evaluator, delta, discount)
    for i, w in enumerate(state.omega):
        state.log.append(
            {"iteration": 0, "candidate": w.as_list(), "parent_edge": None, "D": None, "h_tests": [],
             "accepted": True, "alpha_increment": None, "splits": [], "budget_used": i + 1}
        )
    limit = max_iterations if max_iterations is not None else 100 * K
    it = 0
    while state.budget_used < K and it < limit:
        it += 1
        found = find_new_weight(state)
        if found is None:
            break
        w_new, edge, d = found
        if w_new.key in state.evaluated:
            costs = state.evaluated[w_new.key]
        else:
            costs = evaluator(w_new)
            state.budget_used += 1
        rec = update(state, w_new, costs)
        rec.update({"iteration": it, "D": d, "budget_used": state.budget_used})
        state.log.append(rec)
    return SamplerResult(list(state.omega), list(state.gamma), state.log, state)


def write_audit_log(path, log: Sequence[dict], method: str = "AS") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in log:
            fh.write(json.dumps({"method": method, **rec}, sort_keys=True) + "\n")
