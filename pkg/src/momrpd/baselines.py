"""Comparison strategies: uniform weights (Uni-A, Uni) and breadth-first
regular simplex division with the H-test stop (DC)."""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field

from .sampler import Evaluator, SamplerState, make_simplex, simplex_edges
from .statcosts import CostSampleSet, hypothesis_error
from .weights import WeightVector, midpoint


@dataclass
class BaselineResult:
    method: str
    omega: list[WeightVector]
    gamma: list[CostSampleSet]
    budget_used: int
    log: list[dict] = field(default_factory=list)


def _lattice(n: int, r: int) -> list[tuple[int, ...]]:
    out = []
    for head in itertools.product(range(r + 1), repeat=n - 1):
        if sum(head) <= r:
            out.append((*head, r - sum(head)))
    return out


def uniform_weights(n: int, k: int) -> list[WeightVector]:
    """k weights on the simplex lattice of the smallest resolution holding k points.

    For n = 2 these are k equally spaced points from [1, 0] to [0, 1].
    """
    if n < 2:
        raise ValueError("need at least 2 objectives")
    if k < n:
        raise ValueError(f"need k >= n uniform weights (k={k}, n={n})")
    if n == 2:
        return [WeightVector.from_values([1 - i / (k - 1), i / (k - 1)]) for i in range(k)]
    r = 1
    while math.comb(r + n - 1, n - 1) < k:
        r += 1
    pts = sorted(_lattice(n, r))[:k]
    return [WeightVector.from_values([x / r for x in p]) for p in pts]


def _log_record(w: WeightVector, accepted: bool, budget: int, h_tests=(), parent=None) -> dict:
    return {
        "candidate": w.as_list(),
        "parent_edge": parent,
        "D": None,
        "h_tests": list(h_tests),
        "accepted": accepted,
        "alpha_increment": None,
        "splits": [],
        "budget_used": budget,
    }


def run_uni_a(evaluator: Evaluator, n: int, K: int, method: str = "UniA") -> BaselineResult:
    """Evaluate K uniform weights; every one is kept."""
    weights = uniform_weights(n, K)
    gamma = []
    log = []
    for i, w in enumerate(weights):
        gamma.append(evaluator(w))
        log.append({"iteration": i, **_log_record(w, True, i + 1)})
    return BaselineResult(method, list(weights), gamma, len(weights), log)


def run_uni(evaluator: Evaluator, n: int, k_accepted: int) -> BaselineResult:
    """Uniform sampling with as many weights as AS accepted."""
    return run_uni_a(evaluator, n, k_accepted, method="Uni")


def run_dc(evaluator: Evaluator, n: int, K: int, delta: float) -> BaselineResult:
    """Breadth-first regular subdivision; a simplex is refined only if one of its
    edges joins statistically distinct policies."""
    if K < n:
        raise ValueError("budget K must be at least n")
    state = SamplerState(n=n, delta=delta)
    log: list[dict] = []
    budget = 0

    def evaluate(w: WeightVector) -> CostSampleSet:
        nonlocal budget
        c = state.evaluated.get(w.key)
        if c is None:
            c = evaluator(w)
            state.evaluated[w.key] = c
            budget += 1
        return c

    for i in range(n):
        w = WeightVector.basis(n, i)
        state.omega.append(w)
        state.gamma.append(evaluate(w))
        log.append({"iteration": 0, **_log_record(w, True, budget)})

    def passes(a: WeightVector, b: WeightVector) -> bool:
        ca, cb = state.evaluated[a.key], state.evaluated[b.key]
        return max(hypothesis_error(ca, cb), hypothesis_error(cb, ca)) <= delta

    queue = deque([make_simplex(state.omega)])
    it = 0
    while queue and budget < K:
        s = queue.popleft()
        if not any(passes(a, b) for a, b in simplex_edges(s)):
            continue
        mids: dict[tuple, WeightVector] = {}
        for a, b in simplex_edges(s):
            m = midpoint(a, b)
            if m is not None:
                mids[(a.key, b.key)] = m
        if len(mids) < len(simplex_edges(s)):
            continue  # finer than the weight quantization
        for (ka, kb), m in mids.items():
            if budget >= K:
                break
            if m.key in state.evaluated:
                continue
            c = evaluate(m)
            it += 1
            h_tests = []
            ok = True
            for w in state.omega:
                h = hypothesis_error(c, state.evaluated[w.key])
                h_tests.append({"against": w.as_list(), "h": h})
                ok = ok and h <= delta
            if ok:
                state.omega.append(m)
                state.gamma.append(c)
            parent = [[k / 4096 for k in ka], [k / 4096 for k in kb]]
            log.append({"iteration": it, **_log_record(m, ok, budget, h_tests, parent)})
        if any(m.key not in state.evaluated for m in mids.values()):
            break  # budget exhausted mid-subdivision
        for child in _regular_children(s, mids):
            queue.append(child)
    return BaselineResult("DC", list(state.omega), list(state.gamma), budget, log)


def _regular_children(s, mids: dict) -> list:
    """Edge-midpoint subdivision: corner simplexes plus, for triangles, the
    central one. Implemented for n <= 3."""
    n = len(s)

    def mid(a, b):
        return mids[(a.key, b.key)] if (a.key, b.key) in mids else mids[(b.key, a.key)]

    if n == 2:
        a, b = s
        m = mid(a, b)
        return [make_simplex([a, m]), make_simplex([m, b])]
    if n == 3:
        a, b, c = s
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        return [
            make_simplex([a, ab, ca]),
            make_simplex([ab, b, bc]),
            make_simplex([ca, bc, c]),
            make_simplex([ab, bc, ca]),
        ]
    raise NotImplementedError("regular subdivision is implemented for 2 and 3 objectives")
