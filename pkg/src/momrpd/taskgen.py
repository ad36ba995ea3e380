"""Seeded realizations of the Poisson task-arrival process."""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from dataclasses import dataclass
from typing import Sequence

from .scenario import ROLE_STREAMS, EnvGraph, ScenarioConfig, ScenarioError, make_rng


@dataclass(frozen=True)
class Task:
    id: int
    pickup: int
    dropoff: int
    release: float
    deadline: float

    def __post_init__(self) -> None:
        if not self.deadline > self.release:
            raise ValueError(f"task {self.id}: deadline must be after release")
        if self.pickup == self.dropoff:
            raise ValueError(f"task {self.id}: pickup equals dropoff")


@dataclass(frozen=True)
class TaskInstance:
    tasks: tuple[Task, ...]
    seed: int
    index: int
    role: str = "training"

    def __len__(self) -> int:
        return len(self.tasks)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "s", "g", "t_r", "t_d"])
        for t in self.tasks:
            w.writerow([t.id, t.pickup, t.dropoff, repr(t.release), repr(t.deadline)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, seed: int = 0, index: int = 0, role: str = "training") -> "TaskInstance":
        rows = list(csv.DictReader(io.StringIO(text)))
        tasks = tuple(
            Task(int(r["id"]), int(r["s"]), int(r["g"]), float(r["t_r"]), float(r["t_d"])) for r in rows
        )
        return cls(tasks, seed, index, role)


@dataclass(frozen=True)
class InstanceSet:
    instances: tuple[TaskInstance, ...]
    role: str

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)


def generate_instance(
    g: EnvGraph, cfg: ScenarioConfig, index: int, role: str = "training", window: float | None = None
) -> TaskInstance:
    """One realization on the RNG stream (seed, role, index).

    Inter-arrival times use the inverse exponential CDF; pickup and dropoff are
    two distinct service locations drawn uniformly.
    """
    if index < 0:
        raise ValueError("instance index must be >= 0")
    if role not in ROLE_STREAMS:
        raise ValueError(f"unknown role {role!r}")
    window = cfg.deadline_window if window is None else window
    if window is None:
        raise ScenarioError("deadline_window is unresolved; calibrate it first")
    rng = make_rng(cfg.seed, ROLE_STREAMS[role], index)
    locations = list(g.service_locations)
    tasks = []
    t = 0.0
    while True:
        u = rng.random()
        t += -math.log1p(-u) / cfg.arrival_rate
        if t > cfg.horizon:
            break
        i, j = rng.choice(len(locations), size=2, replace=False)
        tasks.append(Task(len(tasks), locations[i], locations[j], t, t + window))
    return TaskInstance(tuple(tasks), cfg.seed, index, role)


def generate_instance_set(
    g: EnvGraph, cfg: ScenarioConfig, count: int, role: str = "training", window: float | None = None
) -> InstanceSet:
    return InstanceSet(tuple(generate_instance(g, cfg, i, role, window) for i in range(count)), role)


def calibrate_deadline_window(
    g: EnvGraph, cfg: ScenarioConfig, pilots: int = 5, max_factor: int = 32
) -> float:
    """Smallest window in {D, 2D, 4D, ...} (D = graph diameter) for which the
    pure-QoS policy misses no deadline on the pilot instances."""
    from .fleetsim import run_simulation  # local import: fleetsim depends on this module
    from .weights import WeightVector

    diameter = g.diameter()
    qos = WeightVector.basis(2, 0)
    factor = 1
    while factor <= max_factor:
        window = diameter * factor
        penalty = cfg.penalty_M if cfg.penalty_M is not None and cfg.penalty_M > window else None
        trial = dataclasses.replace(cfg, penalty_M=penalty).with_window(window)
        ok = True
        for k in range(pilots):
            inst = generate_instance(g, trial, k, "pilot")
            if run_simulation(g, trial, qos, inst).missed:
                ok = False
                break
        if ok:
            return window
        factor *= 2
    raise ScenarioError(
        f"no deadline window up to {max_factor}x the diameter ({diameter}) lets the pure-QoS "
        "policy meet every deadline; the fleet is undersized for this arrival rate"
    )


def resolve_config(g: EnvGraph, cfg: ScenarioConfig) -> ScenarioConfig:
    """Config with window, penalty and period filled (calibrating if needed)."""
    if cfg.resolved:
        return cfg
    window = cfg.deadline_window
    if window is None:
        window = calibrate_deadline_window(g, cfg)
    return cfg.with_window(window)


def task_lookup(tasks: Sequence[Task]) -> dict[int, Task]:
    return {t.id: t for t in tasks}
