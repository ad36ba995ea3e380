"""Experiment orchestration: methods x budgets x seeds, test-set metrics, outputs."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import baselines, sampler
from .fleetsim import MRPDEvaluator
from .metrics import MC_SAMPLES, MetricsReport, evaluate_policy_set, metric_hypothesis_error
from .scenario import (
    EnvGraph,
    ScenarioConfig,
    ScenarioError,
    default_scenario_path,
    load_scenario,
    scenario_from_dict,
)
from .statcosts import normalize_costs
from .taskgen import generate_instance_set, resolve_config

log = logging.getLogger(__name__)

METHODS = ("AS", "UniA", "Uni", "DC")
AGGREGATE_VERSION = "momrpd-aggregate v1"
AGGREGATE_COLUMNS = [
    "scenario", "method", "K", "seed", "n_objectives", "eta", "eta_test", "accepted", "budget_used",
    "hypothesis_error", "dispersion", "variance", "coverage", "coverage_normalized",
]


class SpecError(ValueError):
    """Experiment spec is malformed."""


@dataclass
class ExperimentSpec:
    scenario: str = "lobby"
    methods: list[str] = field(default_factory=lambda: list(METHODS))
    K: list[int] = field(default_factory=lambda: [10])
    eta: int = 20
    eta_test: int = 20
    delta: float = 0.1
    seeds: list[int] = field(default_factory=lambda: [0])
    out: str = "results"
    objectives: int = 2
    overrides: dict[str, Any] = field(default_factory=dict)
    mc_samples: int = MC_SAMPLES
    eta_list: list[int] = field(default_factory=lambda: [10, 20, 30])
    eta_test_list: list[int] = field(default_factory=lambda: [10, 20, 30])

    def __post_init__(self) -> None:
        if not 0 < self.delta <= 1:
            raise SpecError("delta must lie in (0, 1]")
        if self.eta < 2 or self.eta_test < 2:
            raise SpecError("eta and eta_test must be >= 2")
        unknown = set(self.methods) - set(METHODS)
        if unknown:
            raise SpecError(f"unknown methods {sorted(unknown)}; choose from {list(METHODS)}")
        if "Uni" in self.methods and "AS" not in self.methods:
            raise SpecError("method Uni needs AS in the same spec (it reuses AS's accepted count)")
        if self.objectives not in (2, 3):
            raise SpecError("objectives must be 2 or 3")
        if any(k < self.objectives for k in self.K):
            raise SpecError("every budget K must be at least the number of objectives")
        if any(e < 2 for e in (*self.eta_list, *self.eta_test_list)):
            raise SpecError("sensitivity eta values must be >= 2")

    @classmethod
    def from_dict(cls, data: dict, base: Path | None = None) -> "ExperimentSpec":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise SpecError(f"unknown spec keys: {sorted(unknown)}")
        spec = cls(**data)
        if base is not None and spec.scenario != "lobby" and not Path(spec.scenario).is_absolute():
            spec.scenario = str((base / spec.scenario).resolve())
        return spec

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentSpec":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SpecError(f"{path}: parse error at line {exc.lineno}: {exc.msg}") from exc
        except OSError as exc:
            raise SpecError(f"{path}: {exc}") from exc
        if not isinstance(data, dict):
            raise SpecError(f"{path}: spec must be a JSON object")
        return cls.from_dict(data, path.parent)

    @property
    def scenario_id(self) -> str:
        return Path(self.scenario_path).stem

    @property
    def scenario_path(self) -> Path:
        return default_scenario_path() if self.scenario == "lobby" else Path(self.scenario)


def load_experiment_scenario(spec: ExperimentSpec) -> tuple[EnvGraph, ScenarioConfig]:
    """Scenario with the spec's overrides (scenario-file keys) applied."""
    path = spec.scenario_path
    if not spec.overrides:
        return load_scenario(path)
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    unknown = set(spec.overrides) - set(data) - {"deadline_window", "penalty_M", "assignment_period"}
    if unknown or "map" in spec.overrides:
        raise SpecError(f"bad scenario overrides: {sorted(unknown | ({'map'} & set(spec.overrides)))}")
    data.update(spec.overrides)
    return scenario_from_dict(data)


@dataclass
class Setting:
    """One seeded experiment setting: resolved config and shared evaluators."""

    g: EnvGraph
    cfg: ScenarioConfig
    train: MRPDEvaluator
    test: MRPDEvaluator
    n: int


def prepare(g: EnvGraph, cfg: ScenarioConfig, seed: int, n: int, eta: int, eta_test: int) -> Setting:
    cfg = resolve_config(g, dataclasses.replace(cfg, seed=seed))
    train = generate_instance_set(g, cfg, eta, "training")
    test = generate_instance_set(g, cfg, eta_test, "test")
    return Setting(g, cfg, MRPDEvaluator(g, cfg, train, n), MRPDEvaluator(g, cfg, test, n), n)


def run_method(method: str, setting: Setting, K: int, delta: float, k_accepted: int | None = None):
    ev, n = setting.train, setting.n
    if method == "AS":
        return sampler.run(ev, n, K, delta)
    if method == "UniA":
        return baselines.run_uni_a(ev, n, K)
    if method == "Uni":
        if k_accepted is None:
            raise SpecError("Uni needs the AS accepted count")
        return baselines.run_uni(ev, n, max(k_accepted, n))
    if method == "DC":
        return baselines.run_dc(ev, n, K, delta)
    raise SpecError(f"unknown method {method!r}")


def run_cell(
    setting: Setting, methods: Sequence[str], K: int, delta: float, *, scenario: str, seed: int,
    mc_samples: int = MC_SAMPLES,
) -> tuple[dict[str, MetricsReport], dict[str, list[dict]]]:
    """Run every method at budget K and score them on the test instances."""
    order = [m for m in METHODS if m in methods]
    results: dict[str, Any] = {}
    for m in order:
        k_acc = len(results["AS"].omega) if "AS" in results else None
        results[m] = run_method(m, setting, K, delta, k_acc)
    reports: dict[str, MetricsReport] = {}
    reference = None
    for m in ["UniA", *[x for x in order if x != "UniA"]]:
        if m not in results:
            continue
        res = results[m]
        test_sets = [setting.test(w) for w in res.omega]
        rep = evaluate_policy_set(
            test_sets, reference, method=m, scenario=scenario, K=K, seed=seed,
            mc_samples=mc_samples, budget_used=res.budget_used,
        )
        if m == "UniA":
            reference = rep.coverage
            rep.coverage_normalized = 1.0
        reports[m] = rep
    audit = {m: results[m].log for m in order}
    return {m: reports[m] for m in order}, audit


def _format(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _run_seed(spec: ExperimentSpec, seed: int) -> list[tuple[int, str, MetricsReport, list[dict]]]:
    g, cfg = load_experiment_scenario(spec)
    setting = prepare(g, cfg, seed, spec.objectives, spec.eta, spec.eta_test)
    rows = []
    for K in spec.K:
        reports, audit = run_cell(
            setting, spec.methods, K, spec.delta, scenario=spec.scenario_id, seed=seed, mc_samples=spec.mc_samples
        )
        for m, rep in reports.items():
            rows.append((K, m, rep, audit[m]))
    return rows


def cmd_run(spec: ExperimentSpec, out: str | Path | None = None, jobs: int = 1) -> Path:
    """Run the full grid; returns the aggregate CSV path."""
    out_dir = Path(out or spec.out)
    (out_dir / "audit").mkdir(parents=True, exist_ok=True)
    (out_dir / "reports").mkdir(parents=True, exist_ok=True)
    load_experiment_scenario(spec)  # validate before any work
    if jobs > 1 and len(spec.seeds) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_seed = list(pool.map(_run_seed, [spec] * len(spec.seeds), spec.seeds))
    else:
        per_seed = [_run_seed(spec, s) for s in spec.seeds]
    agg_path = out_dir / "aggregate.csv"
    with agg_path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# {AGGREGATE_VERSION}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(AGGREGATE_COLUMNS)
        for seed, rows in zip(spec.seeds, per_seed):
            for K, m, rep, audit in rows:
                stem = f"{spec.scenario_id}_{m}_K{K}_seed{seed}"
                sampler.write_audit_log(out_dir / "audit" / f"{stem}.jsonl", audit, method=m)
                (out_dir / "reports" / f"{stem}.json").write_text(rep.to_json() + "\n", encoding="utf-8")
                writer.writerow([
                    _format(x) for x in (
                        spec.scenario_id, m, K, seed, spec.objectives, spec.eta, spec.eta_test, rep.accepted,
                        rep.budget_used, rep.hypothesis_error, rep.dispersion, rep.variance, rep.coverage,
                        rep.coverage_normalized,
                    )
                ])
    return agg_path


def cmd_front(
    spec: ExperimentSpec, method: str, K: int, seed: int, out: str | Path | None = None
) -> Path:
    """Per-weight sample clouds and mean/ellipse tables for external plotting."""
    if method not in METHODS:
        raise SpecError(f"unknown method {method!r}")
    out_dir = Path(out or spec.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    g, cfg = load_experiment_scenario(spec)
    setting = prepare(g, cfg, seed, spec.objectives, spec.eta, spec.eta_test)
    k_acc = None
    if method == "Uni":
        k_acc = len(run_method("AS", setting, K, spec.delta).omega)
    res = run_method(method, setting, K, spec.delta, k_acc)
    n = spec.objectives
    sets = normalize_costs(res.gamma) if len(res.gamma) >= 2 else list(res.gamma)
    names = ["c_Q", "c_S", "c_T"][:n]
    wcols = [f"w{i + 1}" for i in range(n)]
    stem = f"front_{spec.scenario_id}_{method}_K{K}_seed{seed}"
    samples_path = out_dir / f"{stem}_samples.csv"
    with samples_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["order", *wcols, "instance", *names, *[f"{c}_norm" for c in names]])
        for order, (raw, norm) in enumerate(zip(res.gamma, sets)):
            for i, (r, z) in enumerate(zip(raw.samples, norm.samples)):
                w.writerow([order, *map(repr, raw.weight.as_list()), i, *map(repr, map(float, r)),
                            *map(repr, map(float, z))])
    means_path = out_dir / f"{stem}_means.csv"
    with means_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["order", *wcols, *[f"mean_{c}" for c in names]]
        if n == 2:
            header += ["ellipse_width", "ellipse_height", "ellipse_angle_deg"]
        w.writerow(header)
        for order, s in enumerate(sets):
            row = [order, *map(repr, s.weight.as_list()), *map(repr, map(float, s.mean))]
            if n == 2:
                row += [repr(x) for x in ellipse_2std(s.cov)]
            w.writerow(row)
    return means_path


def ellipse_2std(cov: np.ndarray) -> tuple[float, float, float]:
    """Full width, height and angle (degrees) of the 2-standard-deviation ellipse."""
    vals, vecs = np.linalg.eigh(np.asarray(cov, dtype=float)[:2, :2])
    vals = np.clip(vals, 0.0, None)
    major = vecs[:, 1]
    angle = float(np.degrees(np.arctan2(major[1], major[0])))
    return float(4 * np.sqrt(vals[1])), float(4 * np.sqrt(vals[0])), angle


def cmd_sensitivity(spec: ExperimentSpec, K: int | None = None, out: str | Path | None = None) -> Path:
    """Mean symmetrized h of AS for every (eta, eta_test) pair; rows are eta_test."""
    out_dir = Path(out or spec.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    K = K if K is not None else spec.K[0]
    g, cfg = load_experiment_scenario(spec)
    path = out_dir / f"sensitivity_{spec.scenario_id}_n{spec.objectives}_K{K}.csv"
    matrix: dict[tuple[int, int], list[float]] = {}
    for seed in spec.seeds:
        base = resolve_config(g, dataclasses.replace(cfg, seed=seed))
        for eta in spec.eta_list:
            train = generate_instance_set(g, base, eta, "training")
            res = sampler.run(MRPDEvaluator(g, base, train, spec.objectives), spec.objectives, K, spec.delta)
            for eta_test in spec.eta_test_list:
                test_ev = MRPDEvaluator(g, base, generate_instance_set(g, base, eta_test, "test"), spec.objectives)
                sets = normalize_costs([test_ev(w) for w in res.omega])
                _, h = metric_hypothesis_error(sets)
                matrix.setdefault((eta, eta_test), []).append(h)
    with path.open("w", newline="", encoding="utf-8") as fh:
        fh.write(f"# mean h-test of AS, scenario={spec.scenario_id}, objectives={spec.objectives}, K={K}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["eta_test", *[f"eta={e}" for e in spec.eta_list]])
        for et in spec.eta_test_list:
            w.writerow([et, *[repr(float(np.mean(matrix[(e, et)]))) for e in spec.eta_list]])
    return path


def validate_scenario(path: str | Path) -> str:
    g, cfg = load_scenario(path)
    return (
        f"{path}: ok ({len(g.vertices)} vertices, {len(g.edges)} edges, {len(g.social_edges)} social, "
        f"{len(g.service_locations)} service locations, {cfg.robots} robots)"
    )
