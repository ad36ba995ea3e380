"""Scalarized fleet policy: insertion + LNS routing, group assignment, simulation.

The policy pi(w) batches newly released tasks every ``assignment_period``,
builds candidate task groups per robot, picks a minimum-cost disjoint cover
and appends the winning tours to the robots' committed plans.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .scenario import ROLE_STREAMS, EnvGraph, ScenarioConfig, ScenarioError, make_rng
from .statcosts import CostSampleSet
from .taskgen import InstanceSet, Task, TaskInstance
from .weights import WeightVector, as_weight

PICKUP = 0
DROPOFF = 1
_LNS_STREAM = 7
_EPS = 1e-9


class InfeasibleTour(ValueError):
    """A tour violates precedence or capacity."""


class Stop(NamedTuple):
    vertex: int
    kind: int  # PICKUP or DROPOFF
    task: int


@dataclass(frozen=True)
class Tour:
    robot: int
    start_vertex: int
    start_time: float
    stops: tuple[Stop, ...] = ()
    onboard: frozenset[int] = frozenset()

    def task_ids(self) -> list[int]:
        seen: dict[int, None] = {}
        for s in self.stops:
            seen.setdefault(s.task, None)
        return list(seen)

    def with_stops(self, stops: Iterable[Stop]) -> "Tour":
        return Tour(self.robot, self.start_vertex, self.start_time, tuple(stops), self.onboard)


@dataclass(frozen=True)
class CostVector:
    qos: float = 0.0
    social: float = 0.0
    distance: float = 0.0

    def vector(self, n: int = 3) -> np.ndarray:
        if not 1 <= n <= 3:
            raise ValueError("cost vectors have at most 3 objectives")
        return np.array([self.qos, self.social, self.distance][:n], dtype=float)


def _weight_triplet(w: WeightVector) -> tuple[float, float, float]:
    v = w.as_list() + [0.0, 0.0]
    return v[0], v[1], v[2]


class _TourCoster:
    """Evaluates stop sequences for one (graph, weight, task table, config)."""

    def __init__(self, g: EnvGraph, w: WeightVector, tasks: dict[int, Task], cfg: ScenarioConfig) -> None:
        if cfg.penalty_M is None:
            raise ScenarioError("penalty_M is unresolved")
        self.g = g
        self.w = w
        self.tasks = tasks
        self.capacity = cfg.capacity
        self.penalty = cfg.penalty_M
        self.wq, self.ws, self.wt = _weight_triplet(w)
        self._trees: dict[int, object] = {}
        self._index = g._index

    def _tree(self, target: int):
        tree = self._trees.get(target)
        if tree is None:
            tree = self.g._tree(self.w, target)
            self._trees[target] = tree
        return tree

    def components(self, start_vertex: int, start_time: float, onboard: frozenset, stops: Sequence[Stop]):
        """(qos, social, distance) of a stop sequence, or None if infeasible."""
        load = len(onboard)
        picked = set()
        v = start_vertex
        t = start_time
        q = 0.0
        soc = 0
        dist = 0.0
        index = self._index
        cap = self.capacity
        for vertex, kind, tid in stops:
            tree = self._tree(vertex)
            i = index[v]
            d = tree.duration[i]
            t += d
            dist += d
            soc += tree.social[i]
            v = vertex
            if kind == PICKUP:
                load += 1
                if load > cap:
                    return None
                picked.add(tid)
            else:
                if tid not in picked and tid not in onboard:
                    return None
                load -= 1
                task = self.tasks[tid]
                q += (t - task.release) if t <= task.deadline else self.penalty
        return q, soc, dist

    def cost(self, tour: Tour, stops: Sequence[Stop] | None = None) -> float:
        comp = self.components(tour.start_vertex, tour.start_time, tour.onboard, tour.stops if stops is None else stops)
        if comp is None:
            return math.inf
        q, soc, dist = comp
        return self.wq * q + self.ws * soc + self.wt * dist


def check_tour(tour: Tour, tasks: dict[int, Task], capacity: int) -> None:
    """Raise InfeasibleTour naming the violated constraint."""
    load = len(tour.onboard)
    picked: set[int] = set()
    dropped: set[int] = set()
    for k, s in enumerate(tour.stops):
        if s.task not in tasks:
            raise InfeasibleTour(f"stop {k} references unknown task {s.task}")
        if s.kind == PICKUP:
            if s.task in picked or s.task in tour.onboard:
                raise InfeasibleTour(f"task {s.task} picked up twice")
            picked.add(s.task)
            load += 1
            if load > capacity:
                raise InfeasibleTour(f"capacity {capacity} exceeded at stop {k}")
        else:
            if s.task not in picked and s.task not in tour.onboard:
                raise InfeasibleTour(f"precedence violated: task {s.task} dropped before pickup")
            if s.task in dropped:
                raise InfeasibleTour(f"task {s.task} dropped twice")
            dropped.add(s.task)
            load -= 1
    open_tasks = (picked | set(tour.onboard)) - dropped
    if open_tasks:
        raise InfeasibleTour(f"tasks {sorted(open_tasks)} are never dropped off")


def tour_cost(g: EnvGraph, w, tour: Tour, tasks: dict[int, Task] | Sequence[Task], cfg: ScenarioConfig) -> float:
    """Weighted QoS + social + distance cost of a feasible tour."""
    w = as_weight(w)
    table = tasks if isinstance(tasks, dict) else {t.id: t for t in tasks}
    check_tour(tour, table, cfg.capacity)
    return _TourCoster(g, w, table, cfg).cost(tour)


def tour_components(g: EnvGraph, w, tour: Tour, tasks: dict[int, Task], cfg: ScenarioConfig) -> tuple[float, float, float]:
    check_tour(tour, tasks, cfg.capacity)
    comp = _TourCoster(g, as_weight(w), tasks, cfg).components(tour.start_vertex, tour.start_time, tour.onboard, tour.stops)
    assert comp is not None
    return comp


def _insert(coster: _TourCoster, tour: Tour, stops: tuple[Stop, ...], task: Task) -> tuple[tuple[Stop, ...], float] | None:
    """Cheapest feasible insertion of ``task`` into ``stops``; earliest positions win ties."""
    best = None
    best_cost = math.inf
    L = len(stops)
    drop = Stop(task.dropoff, DROPOFF, task.id)
    sv, st, onb = tour.start_vertex, tour.start_time, tour.onboard
    wq, ws, wt = coster.wq, coster.ws, coster.wt
    if task.id in tour.onboard:
        for j in range(L + 1):
            cand = stops[:j] + (drop,) + stops[j:]
            comp = coster.components(sv, st, onb, cand)
            if comp is None:
                continue
            c = wq * comp[0] + ws * comp[1] + wt * comp[2]
            if c < best_cost - _EPS:
                best, best_cost = cand, c
    else:
        pick = Stop(task.pickup, PICKUP, task.id)
        for i in range(L + 1):
            head = stops[:i] + (pick,)
            for j in range(i, L + 1):
                cand = head + stops[i:j] + (drop,) + stops[j:]
                comp = coster.components(sv, st, onb, cand)
                if comp is None:
                    continue
                c = wq * comp[0] + ws * comp[1] + wt * comp[2]
                if c < best_cost - _EPS:
                    best, best_cost = cand, c
    if best is None:
        return None
    return best, best_cost


def insert_min_cost(
    g: EnvGraph, w, tour: Tour, task: Task, tasks: dict[int, Task], cfg: ScenarioConfig
) -> Tour | None:
    """Insert pickup and dropoff of ``task`` at the cost-minimizing positions.

    Returns None when no capacity-feasible insertion exists.
    """
    table = dict(tasks)
    table[task.id] = task
    coster = _TourCoster(g, as_weight(w), table, cfg)
    res = _insert(coster, tour, tour.stops, task)
    return None if res is None else tour.with_stops(res[0])


def _lns(coster: _TourCoster, tour: Tour, iterations: int, rng: np.random.Generator) -> Tour:
    ids = tour.task_ids()
    if iterations <= 0 or not ids:
        return tour
    tasks = coster.tasks
    r = min(2, len(ids))
    keys = rng.random((iterations, len(ids)))
    current = tour.stops
    current_cost = coster.cost(tour)
    memo: dict = {}
    for it in range(iterations):
        order = tuple(ids[k] for k in np.argsort(keys[it], kind="stable")[:r])
        mkey = (current, order)
        res = memo.get(mkey)
        if res is None:
            removed = set(order)
            stops = tuple(s for s in current if s.task not in removed)
            cost = math.inf
            for tid in order:
                ins = _insert(coster, tour, stops, tasks[tid])
                if ins is None:
                    stops = None
                    break
                stops, cost = ins
            res = (stops, cost)
            memo[mkey] = res
        stops, cost = res
        if stops is not None and cost <= current_cost + _EPS:
            current, current_cost = stops, cost
    return tour.with_stops(current)


def lns_improve(
    g: EnvGraph,
    w,
    tour: Tour,
    tasks: dict[int, Task],
    cfg: ScenarioConfig,
    rng: np.random.Generator,
    iterations: int | None = None,
) -> Tour:
    """Random removal of min(2, #tasks) tasks and min-cost reinsertion; keeps
    non-worsening results. Output cost never exceeds input cost."""
    coster = _TourCoster(g, as_weight(w), dict(tasks), cfg)
    check_tour(tour, coster.tasks, cfg.capacity)
    return _lns(coster, tour, cfg.lns_iterations if iterations is None else iterations, rng)


def build_tour(
    g: EnvGraph, w, tour: Tour, new_tasks: Sequence[Task], tasks: dict[int, Task], cfg: ScenarioConfig, rng
) -> Tour:
    """Sequential min-cost insertion of ``new_tasks`` followed by LNS."""
    table = dict(tasks)
    for t in new_tasks:
        table[t.id] = t
    coster = _TourCoster(g, as_weight(w), table, cfg)
    return _build(coster, tour, new_tasks, cfg.lns_iterations, rng)


def _build(coster: _TourCoster, tour: Tour, new_tasks: Sequence[Task], iterations: int, rng) -> Tour:
    stops = tour.stops
    for t in new_tasks:
        ins = _insert(coster, tour, stops, t)
        if ins is None:
            raise InfeasibleTour(f"task {t.id} cannot be inserted")
        stops = ins[0]
    return _lns(coster, tour.with_stops(stops), iterations, rng)


@dataclass(frozen=True)
class Candidate:
    robot: int
    tasks: tuple[int, ...]
    tour: Tour
    cost: float


def _form_groups(
    coster: _TourCoster,
    tours: Sequence[Tour],
    new_tasks: Sequence[Task],
    cfg: ScenarioConfig,
    rng_for,
) -> list[Candidate]:
    out = []
    new_tasks = sorted(new_tasks, key=lambda t: (t.release, t.id))
    for tour in tours:
        base = coster.cost(tour)
        k = 0
        for size in range(1, min(cfg.group_size_max, len(new_tasks)) + 1):
            for group in itertools.combinations(new_tasks, size):
                rng = rng_for(tour.robot, k)
                k += 1
                try:
                    cand = _build(coster, tour, group, cfg.lns_iterations, rng)
                except InfeasibleTour:
                    continue
                c = coster.cost(cand)
                if math.isinf(c):
                    continue
                out.append(Candidate(tour.robot, tuple(t.id for t in group), cand, c - base))
    return out


def form_groups(
    g: EnvGraph,
    w,
    robots_state: Sequence[Tour],
    new_tasks: Sequence[Task],
    cfg: ScenarioConfig,
    tasks: dict[int, Task] | None = None,
    seed: int = 0,
) -> list[Candidate]:
    """Candidate (robot, task group, tour, incremental cost) for every robot and
    every group of at most ``group_size_max`` new tasks."""
    table = dict(tasks or {})
    for t in new_tasks:
        table[t.id] = t
    coster = _TourCoster(g, as_weight(w), table, cfg)
    return _form_groups(coster, robots_state, new_tasks, cfg, lambda r, k: make_rng(seed, _LNS_STREAM, r, k))


def assign_groups(candidates: Sequence[Candidate], task_ids: Iterable[int] | None = None) -> list[Candidate]:
    """Exact minimum-cost selection covering every task exactly once with at
    most one group per robot (depth-first branch and bound)."""
    if task_ids is None:
        task_ids = {t for c in candidates for t in c.tasks}
    targets = sorted(set(task_ids))
    if not targets:
        return []
    by_task: dict[int, list[int]] = {t: [] for t in targets}
    for i, c in enumerate(candidates):
        if not c.tasks or any(t not in by_task for t in c.tasks):
            continue
        by_task[min(c.tasks)].append(i)
    for t in targets:
        by_task[t].sort(key=lambda i: (candidates[i].cost, i))
    # per-task share of the cheapest group containing it: admissible bound
    share = {t: math.inf for t in targets}
    for c in candidates:
        if any(t not in share for t in c.tasks):
            continue
        for t in c.tasks:
            share[t] = min(share[t], c.cost / len(c.tasks))

    best_cost = math.inf
    best: list[int] = []
    chosen: list[int] = []
    covered: set[int] = set()
    used: set[int] = set()

    def bound() -> float:
        return sum(share[t] for t in targets if t not in covered)

    def dfs(cost: float) -> None:
        nonlocal best_cost, best
        if len(covered) == len(targets):
            if cost < best_cost - 1e-12:
                best_cost = cost
                best = list(chosen)
            return
        if cost + bound() >= best_cost - 1e-12:
            return
        t = next(x for x in targets if x not in covered)
        for i in by_task[t]:
            c = candidates[i]
            if c.robot in used or any(x in covered for x in c.tasks):
                continue
            chosen.append(i)
            used.add(c.robot)
            covered.update(c.tasks)
            dfs(cost + c.cost)
            covered.difference_update(c.tasks)
            used.discard(c.robot)
            chosen.pop()

    dfs(0.0)
    if math.isinf(best_cost):
        raise AssertionError("no group selection covers all tasks")
    return [candidates[i] for i in best]


# -- simulation ---------------------------------------------------------------


@dataclass
class _Robot:
    id: int
    vertex: int
    time: float
    onboard: set = field(default_factory=set)
    plan: list = field(default_factory=list)


@dataclass
class SimResult:
    cost: CostVector
    missed: int
    finish_times: dict[int, float]
    trace: list[tuple[float, int, int, str]] | None = None


def run_simulation(
    g: EnvGraph, cfg: ScenarioConfig, w, instance: TaskInstance, trace: bool = False
) -> SimResult:
    """Event-driven execution of the fleet policy on one task instance."""
    w = as_weight(w)
    if not cfg.resolved:
        raise ScenarioError("config has unresolved deadline_window / penalty_M / assignment_period")
    tasks = {t.id: t for t in instance.tasks}
    coster = _TourCoster(g, w, tasks, cfg)
    depots = g.depot_vertices
    robots = [_Robot(r, depots[r % len(depots)], 0.0) for r in range(cfg.robots)]
    log: list | None = [] if trace else None
    finish: dict[int, float] = {}
    totals = {"social": 0, "dist": 0.0}
    role = ROLE_STREAMS.get(instance.role, 0)

    def advance(robot: _Robot, now: float) -> None:
        while robot.plan:
            stop = robot.plan[0]
            tree = coster._tree(stop.vertex)
            i = g._index[robot.vertex]
            arr = robot.time + tree.duration[i]
            if arr <= now:
                if log is not None and robot.vertex != stop.vertex:
                    _trace_path(g, w, robot, stop.vertex, log)
                totals["social"] += tree.social[i]
                totals["dist"] += tree.duration[i]
                robot.vertex = stop.vertex
                robot.time = arr
                if stop.kind == PICKUP:
                    robot.onboard.add(stop.task)
                    event = "pickup"
                else:
                    robot.onboard.discard(stop.task)
                    finish[stop.task] = arr
                    event = "dropoff"
                if log is not None:
                    log.append((arr, robot.id, stop.vertex, f"{event}:{stop.task}"))
                robot.plan.pop(0)
                continue
            if robot.time >= now:
                return
            # mid-leg: commit to the next vertex reached at or after ``now``
            v = robot.vertex
            t = robot.time
            while t < now:
                u = tree.next_hop[g._index[v]]
                d, s = g.edge_between(v, u)
                t += d
                totals["social"] += s
                totals["dist"] += d
                v = u
                if log is not None:
                    log.append((t, robot.id, v, "move"))
            robot.vertex = v
            robot.time = t
            return
        if robot.time < now:
            robot.time = now

    pending = sorted(instance.tasks, key=lambda t: (t.release, t.id))
    period = cfg.assignment_period
    capacity_per_round = cfg.robots * cfg.group_size_max
    epoch = 0
    nxt = 0
    while nxt < len(pending):
        now = epoch * period
        for robot in robots:
            advance(robot, now)
        released = []
        while nxt < len(pending) and pending[nxt].release <= now:
            released.append(pending[nxt])
            nxt += 1
        rnd = 0
        while released:
            batch, released = released[:capacity_per_round], released[capacity_per_round:]
            tours = [
                Tour(r.id, r.vertex, max(r.time, now), tuple(r.plan), frozenset(r.onboard)) for r in robots
            ]
            seed_parts = (cfg.seed, _LNS_STREAM, role, instance.index, epoch, rnd)
            cands = _form_groups(
                coster, tours, batch, cfg, lambda r, k: make_rng(*seed_parts, r, k)
            )
            for c in assign_groups(cands, [t.id for t in batch]):
                robot = robots[c.robot]
                robot.plan = list(c.tour.stops)
                robot.time = c.tour.start_time
            rnd += 1
        epoch += 1
    for robot in robots:
        advance(robot, math.inf)

    qos = 0.0
    missed = 0
    for t in instance.tasks:
        tf = finish[t.id]
        if tf <= t.deadline:
            qos += tf - t.release
        else:
            qos += cfg.penalty_M
            missed += 1
    cost = CostVector(qos, float(totals["social"]), float(totals["dist"]))
    return SimResult(cost, missed, finish, log)


def _trace_path(g: EnvGraph, w: WeightVector, robot: _Robot, target: int, log: list) -> None:
    path = g.path(w, robot.vertex, target)
    t = robot.time
    for a, b in zip(path, path[1:-1]):
        t += g.edge_between(a, b)[0]
        log.append((t, robot.id, b, "move"))


def simulate(g: EnvGraph, cfg: ScenarioConfig, w, instance: TaskInstance) -> CostVector:
    return run_simulation(g, cfg, w, instance).cost


def write_trace(path, trace: Sequence[tuple[float, int, int, str]]) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["time", "robot", "vertex", "event"])
        for row in trace:
            out.writerow([repr(float(row[0])), row[1], row[2], row[3]])


def evaluate_weight(
    g: EnvGraph, cfg: ScenarioConfig, w, instances: InstanceSet | Sequence[TaskInstance], n: int | None = None
) -> CostSampleSet:
    """Cost vectors of pi(w) on every instance, ordered by instance index."""
    w = as_weight(w)
    n = w.n if n is None else n
    insts = sorted(instances, key=lambda i: i.index)
    if len(insts) < 2:
        raise ValueError("evaluate_weight needs at least 2 instances")
    rows = [simulate(g, cfg, w, inst).vector(n) for inst in insts]
    return CostSampleSet.from_samples(w, np.vstack(rows))


class MRPDEvaluator:
    """Callable weight -> CostSampleSet with a per-weight cache."""

    def __init__(self, g: EnvGraph, cfg: ScenarioConfig, instances: InstanceSet | Sequence[TaskInstance], n: int) -> None:
        self.g = g
        self.cfg = cfg
        self.instances = list(instances)
        self.n = n
        self.cache: dict[tuple[int, ...], CostSampleSet] = {}
        self.simulations = 0

    @property
    def eta(self) -> int:
        return len(self.instances)

    def __call__(self, w) -> CostSampleSet:
        w = as_weight(w)
        hit = self.cache.get(w.key)
        if hit is None:
            hit = evaluate_weight(self.g, self.cfg, w, self.instances, self.n)
            self.simulations += len(self.instances)
            self.cache[w.key] = hit
        return hit
