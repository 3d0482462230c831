"""Dual-stream timeline of offloaded expert execution.

One load stream copies expert weights (``beta`` seconds each, one copy in
flight at a time) and one compute stream runs experts (``alpha`` seconds
each) in schedule order. An expert is *staged* from the moment its load ends
until its compute starts. ``K`` bounds the number of staged experts per
layer: the load of the j-th expert is held back so that it never lands
before the (j-K)-th expert has started computing. The expert being computed
and the copy in flight use working buffers outside the ``K`` staging slots.

Event times come from an explicit recurrence rather than an event queue:

    load_end[j]      = max(load_end[j-1] + beta, compute_start[j-K])
    compute_start[j] = max(load_end[j], compute_end[j-1])
    compute_end[j]   = compute_start[j] + alpha[j]

Serial mode loads and computes each expert back to back with no overlap.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

from .config import HardwareProfile, ModelGeometry
from .costs import CostVector, compute_costs, resident_capacity
from .errors import ConfigError
from .gating import ExpertWorkload
from .scheduler import Schedule, exact_order, naive_order, schedule_experts


class Stream(str, enum.Enum):
    LOAD = "load"
    COMPUTE = "compute"


class Mode(str, enum.Enum):
    OVERLAPPED = "overlapped"
    SERIAL = "serial"


@dataclass(frozen=True)
class TimelineEvent:
    stream: Stream
    layer_id: int
    expert_id: int
    start: float
    end: float


@dataclass
class SimReport:
    makespan: float
    compute_busy: float
    load_busy: float
    compute_stall: float
    peak_resident_experts: int
    overlap_efficiency: float
    per_layer_breakdown: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "makespan": self.makespan,
            "compute_busy": self.compute_busy,
            "load_busy": self.load_busy,
            "compute_stall": self.compute_stall,
            "peak_resident_experts": self.peak_resident_experts,
            "overlap_efficiency": self.overlap_efficiency,
            "per_layer_breakdown": self.per_layer_breakdown,
        }


@dataclass(frozen=True)
class LayerPlan:
    """Experts of one layer in execution order (indices into ``costs.alphas``)."""

    layer_id: int
    order: tuple[int, ...]
    costs: CostVector
    schedule: Schedule | None = None


def lower_bound(costs: CostVector) -> float:
    """Makespan floor: compute-bound ``beta + sum(alpha)`` or load-bound ``T * beta``."""
    return max(costs.beta + math.fsum(costs.alphas), costs.n_experts * costs.beta)


def simulate(order, costs: CostVector, K: int, mode: Mode | str = Mode.OVERLAPPED):
    """Simulate one layer. ``order`` is a permutation or a :class:`Schedule`."""
    schedule = order if isinstance(order, Schedule) else None
    seq = schedule.order if schedule is not None else tuple(int(i) for i in order)
    if sorted(seq) != list(range(costs.n_experts)):
        raise ConfigError(f"order {list(seq)} is not a permutation of 0..{costs.n_experts - 1}")
    return simulate_layers([LayerPlan(0, seq, costs, schedule)], K, mode)


def simulate_layers(plans: Sequence[LayerPlan], K: int, mode: Mode | str = Mode.OVERLAPPED,
                    continuous_load_stream: bool = False):
    """Run layers back to back on the compute stream.

    With ``continuous_load_stream`` the load stream starts on the next
    layer as soon as it finishes the current one (each layer has its own
    ``K`` staging slots); otherwise a layer's loads wait until the previous
    layer has finished computing.
    """
    mode = Mode(mode)
    if K < 1:
        raise ConfigError(f"K must be >= 1, got {K}")
    events: list[TimelineEvent] = []
    layers = []
    load_free = 0.0
    compute_free = 0.0
    serial_parts: list[float] = []
    for plan in plans:
        if len(set(plan.order)) != len(plan.order):
            raise ConfigError(f"layer {plan.layer_id}: order repeats an expert")
        beta = plan.costs.beta
        alphas = plan.costs.alphas
        if mode is Mode.OVERLAPPED and not continuous_load_stream:
            load_free = max(load_free, compute_free)
        starts: list[float] = []
        layer_events = []
        for j, e in enumerate(plan.order):
            alpha = alphas[e]
            if mode is Mode.SERIAL:
                # fsum keeps every time the correctly rounded sum of its parts
                ls = math.fsum(serial_parts)
                serial_parts.append(beta)
                le = cs = math.fsum(serial_parts)
                serial_parts.append(alpha)
                ce = math.fsum(serial_parts)
            else:
                ls, le = load_free, load_free + beta
                if j >= K and starts[j - K] > le:
                    le = starts[j - K]
                    ls = le - beta
                cs = max(le, compute_free)
                ce = cs + alpha
            load_free, compute_free = le, ce
            starts.append(cs)
            layer_events.append(TimelineEvent(Stream.LOAD, plan.layer_id, e, ls, le))
            layer_events.append(TimelineEvent(Stream.COMPUTE, plan.layer_id, e, cs, ce))
        events.extend(layer_events)
        layers.append((plan, layer_events))
    return events, _report(layers)


def _staged_peak(layer_events: Sequence[TimelineEvent]) -> int:
    load_end = {ev.expert_id: ev.end for ev in layer_events if ev.stream is Stream.LOAD}
    sweep = []
    for ev in layer_events:
        if ev.stream is Stream.COMPUTE and ev.start > load_end[ev.expert_id]:
            sweep.append((load_end[ev.expert_id], 1))
            sweep.append((ev.start, -1))
    # leaving before arriving at equal times
    sweep.sort(key=lambda x: (x[0], x[1]))
    peak = cur = 0
    for _, delta in sweep:
        cur += delta
        peak = max(peak, cur)
    return peak


def _report(layers) -> SimReport:
    computes = [ev for _, evs in layers for ev in evs if ev.stream is Stream.COMPUTE]
    loads = [ev for _, evs in layers for ev in evs if ev.stream is Stream.LOAD]
    if not computes:
        return SimReport(0.0, 0.0, 0.0, 0.0, 0, 1.0, [])
    makespan = max(ev.end for ev in computes + loads)
    compute_busy = math.fsum(ev.end - ev.start for ev in computes)
    load_busy = math.fsum(ev.end - ev.start for ev in loads)
    breakdown = []
    stall_total = []
    prev_end = None
    peak = 0
    for plan, evs in layers:
        comp = [ev for ev in evs if ev.stream is Stream.COMPUTE]
        gaps = []
        for ev in comp:
            if prev_end is not None:
                gaps.append(max(0.0, ev.start - prev_end))
            prev_end = ev.end
        layer_peak = _staged_peak(evs)
        peak = max(peak, layer_peak)
        stall_total.extend(gaps)
        entry = {
            "layer": plan.layer_id,
            "n_experts": len(plan.order),
            "beta": plan.costs.beta,
            "sum_alpha": math.fsum(plan.costs.alphas[e] for e in plan.order),
            "start": min(ev.start for ev in evs) if evs else 0.0,
            "end": max(ev.end for ev in evs) if evs else 0.0,
            "compute_stall": math.fsum(gaps),
            "peak_resident_experts": layer_peak,
            "order": list(plan.order),
        }
        if plan.schedule is not None:
            entry["schedule"] = plan.schedule.to_dict()
        breakdown.append(entry)
    return SimReport(
        makespan=makespan,
        compute_busy=compute_busy,
        load_busy=load_busy,
        compute_stall=math.fsum(stall_total),
        peak_resident_experts=peak,
        overlap_efficiency=compute_busy / makespan if makespan > 0 else 1.0,
        per_layer_breakdown=breakdown,
    )


POLICIES = ("greedy", "naive", "exact")


def plan_layer(layer_id: int, costs: CostVector, K: int, policy: str,
               skip_empty_experts: bool = False) -> LayerPlan | None:
    """Pick an expert order for one layer. Returns None when nothing needs loading."""
    keep = [i for i, a in enumerate(costs.alphas) if a > 0 or not skip_empty_experts]
    if not keep:
        return None
    sub = costs if len(keep) == costs.n_experts else CostVector(
        tuple(costs.alphas[i] for i in keep), costs.beta, dict(costs.derivation))
    if policy == "greedy":
        sched = schedule_experts(sub, K)
    elif policy == "naive":
        sched = naive_order(sub, K)
    elif policy == "exact":
        sched = exact_order(sub, K)
        if not sched.feasible:
            sched = schedule_experts(sub, K)
    else:
        raise ConfigError(f"unknown policy {policy!r}; expected one of {POLICIES}")
    return LayerPlan(layer_id, tuple(keep[i] for i in sched.order), costs, sched)


def simulate_model(
    workloads: Sequence[ExpertWorkload],
    geometry: ModelGeometry,
    hw: HardwareProfile,
    policy: str = "greedy",
    continuous_load_stream: bool = False,
    *,
    K: int | None = None,
    mode: Mode | str = Mode.OVERLAPPED,
    skip_empty_experts: bool = False,
    overhead: float = 0.0,
):
    """Cost, schedule and simulate every MoE layer. Returns ``(events, report)``."""
    K = resident_capacity(geometry, hw, K)
    plans = []
    for wl in workloads:
        costs = compute_costs(wl, geometry, hw, overhead)
        plan = plan_layer(wl.layer_id, costs, K, policy, skip_empty_experts)
        if plan is not None:
            plans.append(plan)
    return simulate_layers(plans, K, mode, continuous_load_stream)
