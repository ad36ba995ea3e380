"""Independent brute-force references used by the test suite.

Nothing here calls the package's path cache, insertion or assignment code;
the helpers only share the plain data types.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from momrpd.fleetsim import DROPOFF, PICKUP, Stop, Tour
from momrpd.scenario import ScenarioConfig
from momrpd.statcosts import CostSampleSet
from momrpd.taskgen import Task
from momrpd.weights import WeightVector


def lex_distances(g, w, source):
    """Bellman-Ford over (scalarized cost, raw duration) pairs from ``source``."""
    vals = list(w.values) + [0.0, 0.0]
    wq, ws, wt = vals[0], vals[1], vals[2]
    best = {v: (math.inf, math.inf) for v in g.vertices}
    best[source] = (0.0, 0.0)
    changed = True
    while changed:
        changed = False
        for e in g.edges:
            step = (wq + wt) * e.duration + ws * (1.0 if e.social else 0.0)
            for a, b in ((e.u, e.v), (e.v, e.u)):
                ca, da = best[a]
                if math.isinf(ca):
                    continue
                cand = (ca + step, da + e.duration)
                cb, db = best[b]
                if cand[0] < cb - 1e-12 or (abs(cand[0] - cb) <= 1e-12 and cand[1] < db - 1e-12):
                    best[b] = cand
                    changed = True
    return best


class LegTable:
    """Memoized (cost, duration) between vertex pairs under one weight."""

    def __init__(self, g, w):
        self.g = g
        self.w = w
        self._rows = {}

    def __call__(self, a, b):
        if a not in self._rows:
            self._rows[a] = lex_distances(self.g, self.w, a)
        return self._rows[a][b]


def scalar_tour_cost(legs, w, start, start_time, stops, tasks, penalty):
    """w . (qos, social, distance) recomputed from leg (cost, duration) pairs.

    Along a lexicographically shortest leg the weighted social part equals
    cost - (wq + wt) * duration, so the leg pair is enough.
    """
    vals = list(w.values) + [0.0, 0.0]
    wq, _wt = vals[0], vals[2]
    t = start_time
    v = start
    q = 0.0
    extra = 0.0
    for s in stops:
        c, d = legs(v, s.vertex)
        t += d
        extra += c - wq * d  # social and distance parts of the leg
        v = s.vertex
        if s.kind == DROPOFF:
            task = tasks[s.task]
            q += (t - task.release) if t <= task.deadline else penalty
    return wq * q + extra


def feasible_orders(task_list, capacity):
    """Every stop order respecting precedence and capacity."""
    stops = []
    for t in task_list:
        stops.append(Stop(t.pickup, PICKUP, t.id))
        stops.append(Stop(t.dropoff, DROPOFF, t.id))
    for perm in itertools.permutations(stops):
        load = 0
        picked = set()
        ok = True
        for s in perm:
            if s.kind == PICKUP:
                picked.add(s.task)
                load += 1
                if load > capacity:
                    ok = False
                    break
            else:
                if s.task not in picked:
                    ok = False
                    break
                load -= 1
        if ok:
            yield perm


def best_stop_order(g, w, start, start_time, task_list, capacity, penalty):
    legs = LegTable(g, w)
    tasks = {t.id: t for t in task_list}
    return min(
        scalar_tour_cost(legs, w, start, start_time, order, tasks, penalty)
        for order in feasible_orders(task_list, capacity)
    )


def best_group_selection(candidates, task_ids):
    """Cheapest choice of at most one candidate per robot covering every task once."""
    robots = sorted({c.robot for c in candidates})
    options = [[None] + [c for c in candidates if c.robot == r] for r in robots]
    target = sorted(task_ids)
    best = math.inf
    for combo in itertools.product(*options):
        chosen = [c for c in combo if c is not None]
        covered = sorted(t for c in chosen for t in c.tasks)
        if covered == target:
            best = min(best, sum(c.cost for c in chosen))
    return best


class PiecewiseStub:
    """Deterministic evaluator: the cost of w is the mean minimizing w . mu.

    Ties go to the lowest index. Every sample row is identical, so two weights
    in the same piece are statistically indistinguishable and weights in
    different pieces are perfectly separated.
    """

    def __init__(self, mus, eta=4):
        self.mus = np.asarray(mus, dtype=float)
        self.eta = eta
        self.calls = 0

    def piece(self, w):
        vals = w.values if isinstance(w, WeightVector) else np.asarray(w, dtype=float)
        scores = self.mus @ vals
        return int(np.flatnonzero(scores <= scores.min() + 1e-12)[0])

    def __call__(self, w):
        self.calls += 1
        mu = self.mus[self.piece(w)]
        return CostSampleSet.from_samples(w, np.tile(mu, (self.eta, 1)))


def lattice(n, r):
    for head in itertools.product(range(r + 1), repeat=n - 1):
        if sum(head) <= r:
            yield np.array([*head, r - sum(head)], dtype=float) / r


def pieces_with_balls(stub, n, radius, resolution):
    """Indices of pieces that contain a lattice point whose whole lattice
    neighbourhood of the given radius lies in the same piece."""
    pts = list(lattice(n, resolution))
    labels = [stub.piece(p) for p in pts]
    arr = np.vstack(pts)
    found = set()
    for i, p in enumerate(pts):
        if labels[i] in found:
            continue
        if np.any(p < radius / 2):
            continue  # keep the ball inside the simplex
        near = np.linalg.norm(arr - p, axis=1) <= radius
        if all(labels[j] == labels[i] for j in np.flatnonzero(near)):
            found.add(labels[i])
    return found


def random_piecewise_stub(rng, n, max_pieces=6, radius=0.06):
    """Random stub whose every piece contains a ball of the given radius."""
    resolution = 96 if n == 2 else 48
    while True:
        k = int(rng.integers(2, max_pieces + 1))
        mus = rng.uniform(0.0, 10.0, size=(k, n))
        stub = PiecewiseStub(mus)
        labels = {stub.piece(p) for p in lattice(n, resolution)}
        if pieces_with_balls(stub, n, radius, resolution) == labels:
            return stub, sorted(labels)


def brute_dominates(a, b):
    le = all(x <= y for x, y in zip(a, b))
    lt = any(x < y for x, y in zip(a, b))
    return le and lt


def random_routing_case(g, seed):
    """1 robot, 1-3 tasks, random weight, capacity and deadlines."""
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 4))
    cap = int(rng.integers(1, 4))
    w = WeightVector.from_values(rng.dirichlet([1, 1, 1]))
    window = float(rng.integers(10, 40))
    cfg = ScenarioConfig(robots=1, capacity=cap, deadline_window=window, penalty_M=400.0,
                         assignment_period=5.0, lns_iterations=200)
    verts = list(g.vertices)
    tasks = []
    for i in range(k):
        s, d = rng.choice(verts, 2, replace=False)
        r = float(rng.integers(0, 5))
        tasks.append(Task(i, int(s), int(d), r, r + window))
    start = int(rng.choice(verts))
    return w, cfg, tasks, start


def random_assignment_case(g, seed):
    """Up to 3 robots and 4 tasks with random positions and weight."""
    rng = np.random.default_rng(seed)
    m = int(rng.integers(1, 4))
    gmax = int(rng.integers(1, 3))
    k = int(rng.integers(1, min(4, m * gmax) + 1))
    w = WeightVector.from_values(rng.dirichlet([1, 1, 1]))
    cfg = ScenarioConfig(robots=m, capacity=int(rng.integers(1, 4)), deadline_window=25.0, penalty_M=250.0,
                         assignment_period=5.0, lns_iterations=20, group_size_max=gmax)
    verts = list(g.vertices)
    tasks = []
    for i in range(k):
        s, d = rng.choice(verts, 2, replace=False)
        tasks.append(Task(i, int(s), int(d), 0.0, 25.0))
    tours = [Tour(r, int(rng.choice(verts)), 0.0) for r in range(m)]
    return w, cfg, tasks, tours


class StepStub:
    """Deterministic evaluator piecewise constant in the first weight coordinate.

    ``breaks`` are increasing thresholds; piece k covers breaks[k-1] <= w0 < breaks[k].
    """

    def __init__(self, breaks, mus, eta=4):
        self.breaks = list(breaks)
        self.mus = np.asarray(mus, dtype=float)
        self.eta = eta

    def piece(self, w):
        x = float(w.values[0])
        return sum(x >= b for b in self.breaks)

    def __call__(self, w):
        return CostSampleSet.from_samples(w, np.tile(self.mus[self.piece(w)], (self.eta, 1)))
