"""Scenario configs and the gating -> costs -> schedule -> simulate pipeline.

A scenario is one JSON object::

    {
      "name": "cpm2-balanced",
      "geometry": {"preset": "cpm2", "bytes_per_param": 2},
      "hardware": {"peak_flops": 1.25e14, "h2d_bandwidth": 1.6e10,
                   "device_memory": 17179869184, "reserved_memory": 8589934592},
      "workload": {"kind": "balanced", "total_tokens": 40960},
      "K": "auto",
      "policies": ["Greedy", "Serial"],
      "seed": 7
    }

Instead of geometry/hardware/workload a scenario may give
``"costs": {"alphas": [...], "beta": x}`` together with an integer ``K``.
Optional keys: ``moe_layers`` (default 1), ``continuous_load_stream``,
``skip_empty_experts``, ``overhead`` (seconds added to every event) and
``output_dir``. Presets are expanded when the scenario is resolved, so a
resolved scenario is self-contained.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from .config import HardwareProfile, ModelGeometry, geometry_from_preset
from .costs import CostVector, compute_costs, resident_capacity
from .errors import ConfigError, InvariantError
from .gating import (PRNG_NAME, SYNTHETIC_KINDS, ExpertWorkload, GatingModel, gaussian_tokens,
                     read_workload_csv, route_tokens, synthetic_workload)
from .scheduler import EXACT_MAX_T
from .simulator import Mode, SimReport, TimelineEvent, plan_layer, simulate_layers
from .traces import chrome_trace, dumps_json, events_csv, write_atomic
from .verification import replay_check

POLICY_NAMES = ("Greedy", "Exact", "Naive", "Serial")
SWEEP_AXES = ("K", "total_tokens", "zipf_s", "bandwidth")
WORKLOAD_KINDS = SYNTHETIC_KINDS + ("csv", "gating")

_TOP_LEVEL = {"name", "geometry", "hardware", "workload", "costs", "K", "policies", "seed",
              "moe_layers", "continuous_load_stream", "skip_empty_experts", "overhead",
              "output_dir"}


@dataclass
class Scenario:
    name: str
    policies: tuple[str, ...]
    seed: int
    K: int | str = "auto"
    geometry: ModelGeometry | None = None
    hardware: HardwareProfile | None = None
    workload: dict = field(default_factory=dict)
    costs: CostVector | None = None
    moe_layers: int = 1
    continuous_load_stream: bool = False
    skip_empty_experts: bool = False
    overhead: float = 0.0
    output_dir: str = "out"

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "policies": list(self.policies),
            "seed": self.seed,
            "K": self.K,
            "moe_layers": self.moe_layers,
            "continuous_load_stream": self.continuous_load_stream,
            "skip_empty_experts": self.skip_empty_experts,
            "overhead": self.overhead,
            "output_dir": self.output_dir,
        }
        if self.costs is not None:
            out["costs"] = self.costs.to_dict()
        else:
            out["geometry"] = self.geometry.to_dict()
            out["hardware"] = self.hardware.to_dict()
            out["workload"] = copy.deepcopy(self.workload)
        return out


def _need(data: dict, key: str, kind, where: str):
    if key not in data:
        raise ConfigError(f"{where}: missing required field {key!r}")
    return _typed(data[key], kind, f"{where}.{key}")


def _typed(value, kind, where: str):
    if kind is int and (isinstance(value, bool) or not isinstance(value, int)):
        raise ConfigError(f"{where}: expected an integer, got {value!r}")
    if kind is float and (isinstance(value, bool) or not isinstance(value, (int, float))):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if kind is bool and not isinstance(value, bool):
        raise ConfigError(f"{where}: expected true/false, got {value!r}")
    if kind is str and not isinstance(value, str):
        raise ConfigError(f"{where}: expected a string, got {value!r}")
    if kind is dict and not isinstance(value, dict):
        raise ConfigError(f"{where}: expected an object, got {value!r}")
    return float(value) if kind is float else value


def _parse_geometry(raw) -> ModelGeometry:
    if isinstance(raw, str):
        raise ConfigError(f"geometry: preset {raw!r} needs an object "
                          f'{{"preset": "{raw}", "bytes_per_param": ...}}')
    raw = dict(_typed(raw, dict, "geometry"))
    preset = raw.pop("preset", None)
    for key, value in raw.items():
        _typed(value, int, f"geometry.{key}")
    if "bytes_per_param" not in raw:
        raise ConfigError("geometry: bytes_per_param must be given explicitly")
    if preset is not None:
        return geometry_from_preset(_typed(preset, str, "geometry.preset"), **raw)
    try:
        return ModelGeometry(**raw)
    except TypeError as exc:
        raise ConfigError(f"geometry: {exc}") from exc


def _parse_hardware(raw) -> HardwareProfile:
    raw = _typed(raw, dict, "hardware")
    unknown = set(raw) - {"peak_flops", "h2d_bandwidth", "device_memory", "reserved_memory"}
    if unknown:
        raise ConfigError(f"hardware: unknown fields {sorted(unknown)}")
    return HardwareProfile(
        peak_flops=_need(raw, "peak_flops", float, "hardware"),
        h2d_bandwidth=_need(raw, "h2d_bandwidth", float, "hardware"),
        device_memory=_need(raw, "device_memory", int, "hardware"),
        reserved_memory=_typed(raw.get("reserved_memory", 0), int, "hardware.reserved_memory"),
    )


def _parse_workload(raw) -> dict:
    raw = dict(_typed(raw, dict, "workload"))
    kind = _need(raw, "kind", str, "workload")
    if kind not in WORKLOAD_KINDS:
        raise ConfigError(f"workload.kind: unknown kind {kind!r}; expected one of {WORKLOAD_KINDS}")
    if kind in ("balanced", "uniform", "zipf", "gating"):
        _need(raw, "total_tokens", int, "workload")
    if kind == "zipf":
        if not _need(raw, "s", float, "workload") > 0:
            raise ConfigError("workload.s: zipf exponent must be > 0")
    if kind == "explicit":
        counts = raw.get("counts")
        if not isinstance(counts, list) or not counts:
            raise ConfigError("workload.counts: expected a non-empty list")
        for i, c in enumerate(counts):
            _typed(c, int, f"workload.counts[{i}]")
    if kind == "csv":
        _need(raw, "path", str, "workload")
    if kind == "gating":
        _need(raw, "n_hash_bits", int, "workload")
        _need(raw, "hidden_dim", int, "workload")
    return raw


def parse_scenario(data: dict, *, seed: int | None = None) -> Scenario:
    """Validate a config object. ``seed`` overrides the config; a missing seed is drawn fresh."""
    data = _typed(data, dict, "scenario")
    unknown = set(data) - _TOP_LEVEL
    if unknown:
        raise ConfigError(f"scenario: unknown fields {sorted(unknown)}")
    policies_raw = data.get("policies")
    if not isinstance(policies_raw, list) or not policies_raw:
        raise ConfigError("policies: at least one policy is required")
    canon = {p.lower(): p for p in POLICY_NAMES}
    policies = []
    for i, p in enumerate(policies_raw):
        if not isinstance(p, str) or p.lower() not in canon:
            raise ConfigError(f"policies[{i}]: unknown policy {p!r}; expected {POLICY_NAMES}")
        policies.append(canon[p.lower()])
    policies = tuple(p for p in POLICY_NAMES if p in policies)

    if seed is None:
        seed = data.get("seed")
    if seed is None:
        seed = random.SystemRandom().randrange(2 ** 32)
    seed = _typed(seed, int, "seed")

    K = data.get("K", "auto")
    if K != "auto":
        K = _typed(K, int, "K")
        if K < 1:
            raise ConfigError(f"K: must be >= 1 or \"auto\", got {K}")

    s = Scenario(
        name=_typed(data.get("name", "scenario"), str, "name"),
        policies=policies,
        seed=seed,
        K=K,
        moe_layers=_typed(data.get("moe_layers", 1), int, "moe_layers"),
        continuous_load_stream=_typed(data.get("continuous_load_stream", False), bool,
                                      "continuous_load_stream"),
        skip_empty_experts=_typed(data.get("skip_empty_experts", False), bool,
                                  "skip_empty_experts"),
        overhead=_typed(data.get("overhead", 0.0), float, "overhead"),
        output_dir=_typed(data.get("output_dir", "out"), str, "output_dir"),
    )
    if s.moe_layers < 1:
        raise ConfigError("moe_layers: must be >= 1")
    if s.overhead < 0:
        raise ConfigError("overhead: must be >= 0")

    if "costs" in data:
        if any(k in data for k in ("geometry", "hardware", "workload")):
            raise ConfigError("costs: give either costs or geometry/hardware/workload, not both")
        s.costs = CostVector.from_dict(_typed(data["costs"], dict, "costs"))
        if s.K == "auto":
            raise ConfigError("K: explicit costs need an integer K")
        return s
    for key in ("geometry", "hardware", "workload"):
        if key not in data:
            raise ConfigError(f"scenario: missing required field {key!r}")
    s.geometry = _parse_geometry(data["geometry"])
    s.hardware = _parse_hardware(data["hardware"])
    s.workload = _parse_workload(data["workload"])
    if s.workload["kind"] == "explicit" and len(s.workload["counts"]) != s.geometry.n_experts_per_layer:
        raise ConfigError(f"workload.counts: {len(s.workload['counts'])} entries, geometry has "
                          f"{s.geometry.n_experts_per_layer} experts")
    return s


def load_scenario(path, *, seed: int | None = None) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    try:
        return parse_scenario(data, seed=seed)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def build_workloads(s: Scenario) -> list[ExpertWorkload]:
    """One workload per MoE layer; layer ``l`` draws from seed ``(seed, l)``."""
    wl = s.workload
    kind = wl["kind"]
    n_experts = s.geometry.n_experts_per_layer
    out = []
    for layer in range(s.moe_layers):
        layer_seed = hash_seed(s.seed, layer)
        if kind == "csv":
            w = read_workload_csv(wl["path"], layer)
            if w.n_experts != n_experts:
                raise ConfigError(f"workload.path: {w.n_experts} experts, geometry has {n_experts}")
        elif kind == "gating":
            model = GatingModel(wl.get("projection_seed", s.seed), wl["n_hash_bits"],
                                wl["hidden_dim"])
            tokens = gaussian_tokens(wl["total_tokens"], wl["hidden_dim"], layer_seed)
            w = route_tokens(model, tokens, n_experts, layer)
        elif kind == "explicit":
            w = synthetic_workload("explicit", sum(wl["counts"]), n_experts,
                                   counts=wl["counts"], layer_id=layer)
        else:
            w = synthetic_workload(kind, wl["total_tokens"], n_experts, layer_seed,
                                   s=wl.get("s", 1.0), layer_id=layer)
        out.append(w)
    return out


def hash_seed(seed: int, layer: int) -> int:
    return (seed * 1_000_003 + layer) % (2 ** 63)


def layer_costs(s: Scenario) -> list[CostVector]:
    if s.costs is not None:
        return [s.costs] * s.moe_layers
    return [compute_costs(w, s.geometry, s.hardware, s.overhead,
                          geometry_id=f"d_model={s.geometry.d_model},d_ff={s.geometry.d_ff}",
                          hardware_id=f"bw={s.hardware.h2d_bandwidth!r}")
            for w in build_workloads(s)]


def resolve_K(s: Scenario) -> int:
    if s.costs is not None:
        return int(s.K)
    return resident_capacity(s.geometry, s.hardware, None if s.K == "auto" else int(s.K))


@dataclass
class PolicyRun:
    policy: str
    mode: Mode
    events: list[TimelineEvent]
    report: SimReport
    K: int
    costs: list[CostVector]
    counterexamples: list[dict]

    def summary_row(self) -> dict:
        all_alpha = [a for c in self.costs for a in c.alphas]
        loads = math.fsum(len(entry["order"]) * entry["beta"]
                          for entry in self.report.per_layer_breakdown)
        feasible = sum(1 for entry in self.report.per_layer_breakdown
                       if entry.get("schedule", {}).get("feasible"))
        return {
            "policy": self.policy,
            "mode": self.mode.value,
            "moe_layers": len(self.costs),
            "n_experts": self.costs[0].n_experts,
            "K": self.K,
            "beta": self.costs[0].beta,
            "sum_alpha": math.fsum(all_alpha),
            "max_alpha": max(all_alpha),
            "makespan": self.report.makespan,
            "lower_bound": max(self.costs[0].beta + math.fsum(all_alpha), loads),
            "compute_stall": self.report.compute_stall,
            "overlap_efficiency": self.report.overlap_efficiency,
            "peak_resident_experts": self.report.peak_resident_experts,
            "feasible_layers": feasible,
            "counterexamples": len(self.counterexamples),
        }


SUMMARY_COLUMNS = ("policy", "mode", "moe_layers", "n_experts", "K", "beta", "sum_alpha",
                   "max_alpha", "makespan", "lower_bound", "compute_stall",
                   "overlap_efficiency", "peak_resident_experts", "feasible_layers",
                   "counterexamples")


def run_policy(policy: str, costs: Sequence[CostVector], K: int, s: Scenario) -> PolicyRun:
    mode = Mode.SERIAL if policy == "Serial" else Mode.OVERLAPPED
    planner = {"Greedy": "greedy", "Exact": "exact", "Naive": "naive", "Serial": "naive"}[policy]
    if policy == "Exact" and max(c.n_experts for c in costs) > EXACT_MAX_T:
        raise ConfigError(f"policies: Exact needs at most {EXACT_MAX_T} experts per layer")
    plans = []
    for layer, c in enumerate(costs):
        plan = plan_layer(layer, c, K, planner, s.skip_empty_experts)
        if plan is not None:
            plans.append(plan)
    events, report = simulate_layers(plans, K, mode, s.continuous_load_stream)
    violations = replay_check(events, dict(enumerate(costs)), K, report.makespan)
    if violations:
        raise InvariantError(f"{policy}: simulator self-check failed: {violations[0]}")
    counterexamples = [
        {"layer": p.layer_id, "alphas": list(p.costs.alphas), "beta": p.costs.beta, "K": K,
         "exact_order": list(p.schedule.order)}
        for p in plans if p.schedule is not None and p.schedule.counterexample
    ]
    return PolicyRun(policy, mode, events, report, K, list(costs), counterexamples)


def run_pipeline(s: Scenario) -> list[PolicyRun]:
    K = resolve_K(s)
    costs = layer_costs(s)
    return [run_policy(p, costs, K, s) for p in s.policies]


def _csv_text(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return buf.getvalue()


def run_scenario(s: Scenario, out_dir=None, trace_format: str = "both") -> dict[str, Path]:
    """Run every policy and write traces, reports and ``summary.csv``. Returns written paths."""
    if trace_format not in ("chrome", "csv", "both"):
        raise ConfigError(f"trace format must be chrome, csv or both, got {trace_format!r}")
    out = Path(out_dir if out_dir is not None else s.output_dir)
    runs = run_pipeline(s)
    header = {"scenario": s.name, "seed": s.seed, "prng": PRNG_NAME}
    written: dict[str, Path] = {}

    def emit(name: str, text: str):
        write_atomic(out / name, text)
        written[name] = out / name

    emit("scenario.resolved.json", dumps_json(s.to_dict()))
    for run in runs:
        stem = run.policy.lower()
        meta = {**header, "policy": run.policy, "mode": run.mode.value, "K": run.K}
        emit(f"{stem}.report.json", dumps_json({
            **meta, "summary": run.summary_row(), "report": run.report.to_dict(),
            "counterexamples": run.counterexamples}))
        if trace_format in ("chrome", "both"):
            emit(f"{stem}.trace.json", dumps_json(chrome_trace(run.events, meta)))
        if trace_format in ("csv", "both"):
            emit(f"{stem}.events.csv", events_csv(run.events))
    emit("summary.csv", _csv_text([r.summary_row() for r in runs], SUMMARY_COLUMNS))
    counterexamples = [dict(policy=r.policy, **c) for r in runs for c in r.counterexamples]
    if counterexamples:
        emit("counterexamples.json", dumps_json(counterexamples))
    return written


def apply_axis(s: Scenario, axis: str, value) -> Scenario:
    """Copy of ``s`` with one sweep parameter replaced."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"--axis: unknown axis {axis!r}; expected one of {SWEEP_AXES}")
    s = replace(s, workload=copy.deepcopy(s.workload))
    if axis == "K":
        k = int(value)
        if k != float(value) or k < 1:
            raise ConfigError(f"--values: K must be a positive integer, got {value!r}")
        s.K = k
        return s
    if s.costs is not None:
        raise ConfigError(f"--axis {axis}: not applicable to a scenario with explicit costs")
    kind = s.workload["kind"]
    if axis == "total_tokens":
        if kind in ("explicit", "csv"):
            raise ConfigError(f"--axis total_tokens: not applicable to {kind} workloads")
        n = int(value)
        if n != float(value) or n < 0:
            raise ConfigError(f"--values: total_tokens must be a non-negative integer, got {value!r}")
        s.workload["total_tokens"] = n
    elif axis == "zipf_s":
        if kind != "zipf":
            raise ConfigError(f"--axis zipf_s: workload kind is {kind!r}, not 'zipf'")
        if not float(value) > 0:
            raise ConfigError("--values: zipf exponent must be > 0")
        s.workload["s"] = float(value)
    elif axis == "bandwidth":
        s.hardware = replace(s.hardware, h2d_bandwidth=float(value))
    return s


SWEEP_COLUMNS = ("axis", "value") + SUMMARY_COLUMNS


def _sweep_point(args):
    s, axis, value = args
    point = apply_axis(s, axis, value)
    return [{"axis": axis, "value": value, **run.summary_row()} for run in run_pipeline(point)]


def sweep(base: Scenario, axis: str, values: Sequence, jobs: int = 1) -> list[dict]:
    """One summary row per value per policy, in ``values`` x policy order."""
    for v in values:
        apply_axis(base, axis, v)  # validate every point before running any
    tasks = [(base, axis, v) for v in values]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_sweep_point, tasks))
    else:
        chunks = [_sweep_point(t) for t in tasks]
    return [row for chunk in chunks for row in chunk]


def write_sweep(rows: Sequence[dict], out_dir) -> Path:
    path = Path(out_dir) / "sweep.csv"
    write_atomic(path, _csv_text(rows, SWEEP_COLUMNS))
    return path
