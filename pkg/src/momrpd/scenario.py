"""Workspace graphs, fleet configuration and scenario files."""

from __future__ import annotations

import dataclasses
import heapq
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .weights import WeightVector, as_weight

ROLE_STREAMS = {"training": 1, "test": 2, "pilot": 3}
_TIE_TOL = 1e-9


class ScenarioError(ValueError):
    """Scenario file could not be parsed or violates an invariant."""


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based generator for the stream ``(seed, *stream)``."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *[int(s) for s in stream]])
    return np.random.Generator(np.random.Philox(ss))


Rect = tuple[int, int, int, int]  # (row0, col0, row1, col1), inclusive


@dataclass(frozen=True)
class Edge:
    u: int
    v: int
    duration: float
    social: bool


@dataclass(frozen=True)
class Leg:
    cost: float
    duration: float
    social: int


class _Tree:
    """Shortest-path tree towards one target under one weight."""

    __slots__ = ("cost", "duration", "social", "next_hop")

    def __init__(self, cost: list, duration: list, social: list, next_hop: list) -> None:
        self.cost = cost
        self.duration = duration
        self.social = social
        self.next_hop = next_hop


@dataclass(frozen=True, eq=False)
class EnvGraph:
    """Undirected workspace graph with per-edge duration and social flag."""

    vertices: tuple[int, ...]
    edges: tuple[Edge, ...]
    service_locations: tuple[int, ...]
    depot_vertices: tuple[int, ...]
    rows: tuple[str, ...] | None = None
    _adj: dict = field(default_factory=dict, repr=False)
    _index: dict = field(default_factory=dict, repr=False)
    _trees: dict = field(default_factory=dict, repr=False)
    _lock: Any = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self) -> None:
        index = {v: i for i, v in enumerate(self.vertices)}
        if len(index) != len(self.vertices):
            raise ScenarioError("duplicate vertex ids")
        adj: dict[int, list[tuple[int, float, int]]] = {v: [] for v in self.vertices}
        for e in self.edges:
            if e.u not in index or e.v not in index:
                raise ScenarioError(f"edge ({e.u}, {e.v}) references an unknown vertex")
            if not e.duration > 0:
                raise ScenarioError(f"edge ({e.u}, {e.v}): duration must be positive")
            if e.social not in (True, False):
                raise ScenarioError(f"edge ({e.u}, {e.v}): social flag must be boolean")
            adj[e.u].append((e.v, float(e.duration), int(e.social)))
            adj[e.v].append((e.u, float(e.duration), int(e.social)))
        for v in adj:
            adj[v].sort()
        self._adj.update(adj)
        self._index.update(index)
        for v in (*self.service_locations, *self.depot_vertices):
            if v not in index:
                raise ScenarioError(f"location {v} is not a graph vertex")
        self._check_connected()

    def _check_connected(self) -> None:
        required = set(self.service_locations) | set(self.depot_vertices)
        if not required:
            return
        start = min(required)
        seen = {start}
        stack = [start]
        while stack:
            v = stack.pop()
            for u, _, _ in self._adj[v]:
                if u not in seen:
                    seen.add(u)
                    stack.append(u)
        missing = required - seen
        if missing:
            raise ScenarioError(
                f"graph is disconnected: locations {sorted(missing)[:5]} unreachable from {start}"
            )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EnvGraph):
            return NotImplemented
        return (
            self.vertices == other.vertices
            and self.edges == other.edges
            and self.service_locations == other.service_locations
            and self.depot_vertices == other.depot_vertices
            and self.rows == other.rows
        )

    def __hash__(self) -> int:
        return hash((self.vertices, self.edges, self.service_locations, self.depot_vertices))

    def neighbors(self, v: int) -> list[tuple[int, float, int]]:
        return self._adj[v]

    @property
    def social_edges(self) -> list[Edge]:
        return [e for e in self.edges if e.social]

    def diameter(self) -> float:
        """Largest shortest-path duration between any two vertices."""
        n = len(self.vertices)
        rows = [self._index[e.u] for e in self.edges]
        cols = [self._index[e.v] for e in self.edges]
        data = [e.duration for e in self.edges]
        mat = csr_matrix((data, (rows, cols)), shape=(n, n))
        dist = shortest_path(mat, directed=False)
        finite = dist[np.isfinite(dist)]
        return float(finite.max()) if finite.size else 0.0

    # -- scalarized shortest paths -------------------------------------

    def _tree(self, w: WeightVector, target: int) -> _Tree:
        key = (w.key, target)
        tree = self._trees.get(key)
        if tree is None:
            tree = self._build_tree(w, target)
            with self._lock:
                self._trees.setdefault(key, tree)
        return tree

    def _build_tree(self, w: WeightVector, target: int) -> _Tree:
        # d'(e) = w_Q d(e) + w_S phi(e) + w_T d(e); ties by raw duration, then
        # by the lexicographically smallest vertex sequence
        vals = w.values
        a_dur = float(vals[0] + (vals[2] if len(vals) > 2 else 0.0))
        a_soc = float(vals[1]) if len(vals) > 1 else 0.0
        idx = self._index
        n = len(self.vertices)
        inf = float("inf")
        cost = [inf] * n
        dur = [inf] * n
        t = idx[target]
        cost[t] = 0.0
        dur[t] = 0.0
        order: list[int] = []
        done = [False] * n
        heap = [(0.0, 0.0, target)]
        adj = self._adj
        while heap:
            c, d, v = heapq.heappop(heap)
            i = idx[v]
            if done[i]:
                continue
            done[i] = True
            order.append(v)
            for u, du, su in adj[v]:
                j = idx[u]
                if done[j]:
                    continue
                nc = c + a_dur * du + a_soc * su
                nd = d + du
                oc = cost[j]
                if nc < oc - _TIE_TOL or (nc <= oc + _TIE_TOL and nd < dur[j] - _TIE_TOL):
                    cost[j] = nc
                    dur[j] = nd
                    heapq.heappush(heap, (nc, nd, u))
        next_hop = [-1] * n
        social = [0] * n
        for v in order[1:]:
            i = idx[v]
            cv, dv = cost[i], dur[i]
            for u, du, su in adj[v]:  # sorted by vertex id
                j = idx[u]
                if (
                    abs(cost[j] + a_dur * du + a_soc * su - cv) <= _TIE_TOL
                    and abs(dur[j] + du - dv) <= _TIE_TOL
                ):
                    next_hop[i] = u
                    social[i] = social[j] + su
                    break
            else:  # pragma: no cover - label-setting guarantees a tight neighbour
                raise RuntimeError("shortest-path tree reconstruction failed")
        return _Tree(cost, dur, social, next_hop)

    def leg(self, w: WeightVector, source: int, target: int) -> Leg:
        tree = self._tree(w, target)
        i = self._index[source]
        c = tree.cost[i]
        if c == float("inf"):
            raise ScenarioError(f"vertex {target} unreachable from {source}")
        return Leg(c, tree.duration[i], tree.social[i])

    def path(self, w: WeightVector, source: int, target: int) -> list[int]:
        tree = self._tree(w, target)
        if tree.cost[self._index[source]] == float("inf"):
            raise ScenarioError(f"vertex {target} unreachable from {source}")
        out = [source]
        v = source
        while v != target:
            v = tree.next_hop[self._index[v]]
            out.append(v)
        return out

    def edge_between(self, u: int, v: int) -> tuple[float, int]:
        for x, d, s in self._adj[u]:
            if x == v:
                return d, s
        raise KeyError((u, v))


def scalarized_shortest_path(
    g: EnvGraph, w: WeightVector | Sequence[float], source: int, target: int
) -> tuple[list[int], float, float]:
    """Minimum scalarized-cost path; returns (vertex path, cost, raw duration)."""
    w = as_weight(w)
    leg = g.leg(w, source, target)
    return g.path(w, source, target), leg.cost, leg.duration


# -- grids ------------------------------------------------------------------


def _in_rects(r: int, c: int, rects: Iterable[Rect]) -> bool:
    return any(r0 <= r <= r1 and c0 <= c <= c1 for r0, c0, r1, c1 in rects)


def build_grid_environment(
    width: int,
    height: int,
    social_region: Sequence[Rect] = (),
    blocked: Sequence[Rect] = (),
    service_locations: Sequence[tuple[int, int]] | None = None,
    depots: Sequence[tuple[int, int]] | None = None,
) -> EnvGraph:
    """4-connected unit grid; rectangles are (row0, col0, row1, col1) inclusive.

    Without explicit service locations every free cell is one; depots default
    to the first free cell.
    """
    if width < 2 or height < 2:
        raise ScenarioError("grid width and height must be at least 2")
    for r0, c0, r1, c1 in (*social_region, *blocked):
        if not (0 <= r0 <= r1 < height and 0 <= c0 <= c1 < width):
            raise ScenarioError(f"region {(r0, c0, r1, c1)} outside the {height}x{width} grid")
    grid = []
    for r in range(height):
        row = []
        for c in range(width):
            if _in_rects(r, c, blocked):
                row.append("#")
            elif _in_rects(r, c, social_region):
                row.append("S")
            else:
                row.append(".")
        grid.append(row)
    for r, c in service_locations or ():
        if grid[r][c] == "#":
            raise ScenarioError(f"service location {(r, c)} is blocked")
        grid[r][c] = "P"
    for i, (r, c) in enumerate(depots or ()):
        if grid[r][c] == "#":
            raise ScenarioError(f"depot {(r, c)} is blocked")
        grid[r][c] = str(i % 10)
    g = graph_from_rows(["".join(row) for row in grid], robots=max(1, len(depots or ())))
    if service_locations is None:
        free = tuple(g.vertices)
        depot_vs = g.depot_vertices or (free[0],)
        return EnvGraph(g.vertices, g.edges, free, depot_vs, None)
    return g


def graph_from_rows(rows: Sequence[str], robots: int = 1) -> EnvGraph:
    """Build an EnvGraph from map rows (``.`` free, ``#`` blocked, ``S`` social,
    ``P`` service location, digits robot depots)."""
    rows = [str(r) for r in rows]
    if not rows:
        raise ScenarioError("map is empty")
    width = len(rows[0])
    height = len(rows)
    for i, r in enumerate(rows):
        if len(r) != width:
            raise ScenarioError(f"map row {i}: expected {width} columns, got {len(r)}")
        bad = set(r) - set(".#SP0123456789")
        if bad:
            raise ScenarioError(f"map row {i}: unknown cell symbols {sorted(bad)}")
    if width < 2 or height < 2:
        raise ScenarioError("grid width and height must be at least 2")
    vertices = []
    service = []
    depots: dict[int, int] = {}
    for r, row in enumerate(rows):
        for c, ch in enumerate(row):
            if ch == "#":
                continue
            v = r * width + c
            vertices.append(v)
            if ch == "P":
                service.append(v)
            elif ch.isdigit():
                depots.setdefault(int(ch), v)
    edges = []
    for r in range(height):
        for c in range(width):
            if rows[r][c] == "#":
                continue
            v = r * width + c
            for rr, cc in ((r, c + 1), (r + 1, c)):
                if rr < height and cc < width and rows[rr][cc] != "#":
                    social = rows[r][c] == "S" and rows[rr][cc] == "S"
                    edges.append(Edge(v, rr * width + cc, 1.0, social))
    depot_list = [depots[k] for k in sorted(depots)]
    if depot_list:
        depot_vs = tuple(depot_list[i % len(depot_list)] for i in range(robots))
    else:
        depot_vs = ()
    return EnvGraph(tuple(vertices), tuple(edges), tuple(service), depot_vs, tuple(rows))


# -- configuration ------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioConfig:
    """Fleet and task-process parameters. ``None`` windows/penalties/periods are
    resolved by :func:`resolve_config`."""

    robots: int = 2
    capacity: int = 4
    horizon: float = 1500.0
    arrival_rate: float = 0.027
    deadline_window: float | None = None
    penalty_M: float | None = None
    assignment_period: float | None = None
    lns_iterations: int = 200
    group_size_max: int = 2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.capacity < 1:
            raise ScenarioError("capacity must be >= 1")
        if self.robots < 1:
            raise ScenarioError("robots must be >= 1")
        if not self.horizon > 0:
            raise ScenarioError("horizon must be positive")
        if not self.arrival_rate > 0:
            raise ScenarioError("lambda must be positive")
        if self.deadline_window is not None and not self.deadline_window > 0:
            raise ScenarioError("deadline_window must be positive")
        if self.penalty_M is not None and self.deadline_window is not None:
            if not self.penalty_M > self.deadline_window:
                raise ScenarioError("penalty_M must exceed deadline_window")
        if self.assignment_period is not None and not self.assignment_period > 0:
            raise ScenarioError("assignment_period must be positive")
        if self.lns_iterations < 0:
            raise ScenarioError("lns_iterations must be >= 0")
        if self.group_size_max < 1:
            raise ScenarioError("group_size_max must be >= 1")

    @property
    def resolved(self) -> bool:
        return None not in (self.deadline_window, self.penalty_M, self.assignment_period)

    def with_window(self, window: float) -> "ScenarioConfig":
        """Fill defaults derived from a deadline window: M = 10 window, period = window / 4."""
        return dataclasses.replace(
            self,
            deadline_window=float(window),
            penalty_M=self.penalty_M if self.penalty_M is not None else 10.0 * float(window),
            assignment_period=(
                self.assignment_period if self.assignment_period is not None else float(window) / 4.0
            ),
        )


_CONFIG_KEYS = {
    "robots": "robots",
    "capacity": "capacity",
    "horizon": "horizon",
    "lambda": "arrival_rate",
    "deadline_window": "deadline_window",
    "penalty_M": "penalty_M",
    "assignment_period": "assignment_period",
    "lns_iterations": "lns_iterations",
    "group_size_max": "group_size_max",
    "seed": "seed",
}
_INT_FIELDS = {"robots", "capacity", "lns_iterations", "group_size_max", "seed"}


def scenario_from_dict(data: dict) -> tuple[EnvGraph, ScenarioConfig]:
    if not isinstance(data, dict):
        raise ScenarioError("scenario must be a JSON object")
    missing = [k for k in ("map", *_CONFIG_KEYS) if k not in data and k not in _OPTIONAL_KEYS]
    if missing:
        raise ScenarioError(f"missing keys: {missing}")
    unknown = set(data) - {"map", *_CONFIG_KEYS}
    if unknown:
        raise ScenarioError(f"unknown keys: {sorted(unknown)}")
    kwargs = {}
    for key, attr in _CONFIG_KEYS.items():
        if key not in data:
            continue
        val = data[key]
        if val is None:
            if attr not in ("deadline_window", "penalty_M", "assignment_period"):
                raise ScenarioError(f"field {key!r} must not be null")
            kwargs[attr] = None
            continue
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ScenarioError(f"field {key!r} must be a number, got {val!r}")
        if attr in _INT_FIELDS:
            if int(val) != val:
                raise ScenarioError(f"field {key!r} must be an integer, got {val!r}")
            val = int(val)
        else:
            val = float(val)
        kwargs[attr] = val
    cfg = ScenarioConfig(**kwargs)
    rows = data["map"]
    if not isinstance(rows, list) or not all(isinstance(r, str) for r in rows):
        raise ScenarioError("field 'map' must be a list of row strings")
    g = graph_from_rows(rows, robots=cfg.robots)
    if not g.service_locations:
        raise ScenarioError("map has no service locations ('P')")
    if len(g.service_locations) < 2:
        raise ScenarioError("map needs at least 2 service locations")
    if not g.depot_vertices:
        raise ScenarioError("map has no robot depots (digits)")
    return g, cfg


_OPTIONAL_KEYS = {"deadline_window", "penalty_M", "assignment_period", "lns_iterations", "group_size_max"}


def scenario_to_dict(g: EnvGraph, cfg: ScenarioConfig) -> dict:
    if g.rows is None:
        raise ScenarioError("only grid-map graphs can be saved")
    out: dict[str, Any] = {"map": list(g.rows)}
    for key, attr in _CONFIG_KEYS.items():
        out[key] = getattr(cfg, attr)
    return out


def load_scenario(path: str | Path) -> tuple[EnvGraph, ScenarioConfig]:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    try:
        return scenario_from_dict(data)
    except ScenarioError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc


def save_scenario(path: str | Path, g: EnvGraph, cfg: ScenarioConfig) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(g, cfg), indent=1) + "\n", encoding="utf-8")


def default_scenario_path() -> Path:
    return Path(__file__).parent / "data" / "lobby.json"
