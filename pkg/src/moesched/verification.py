"""Independent checks: brute-force feasibility, trace replay, gating balance.

These routines do not call into the scheduler's search code, so they can
audit it. ``enumerate_feasibility`` is O(T!) and refuses ``T > 9``.
"""

from __future__ import annotations

import hashlib
import itertools
import math
from collections import defaultdict
from dataclasses import dataclass
from functools import lru_cache
from typing import Mapping, Sequence

import numpy as np

from .costs import CostVector
from .errors import SizeError
from .gating import GatingModel, gaussian_tokens, route_tokens
from .scheduler import ABS_TOL, REL_TOL, greedy_order
from .simulator import Stream, TimelineEvent

ENUM_MAX_T = 9


@dataclass(frozen=True)
class OracleResult:
    instance_digest: str
    oracle_feasible: bool
    witness_order: tuple[int, ...] | None
    greedy_feasible: bool

    @property
    def mismatch(self) -> bool:
        return self.oracle_feasible != self.greedy_feasible


def instance_digest(costs: CostVector, K: int) -> str:
    payload = repr((tuple(costs.alphas), costs.beta, int(K))).encode()
    return hashlib.sha256(payload).hexdigest()[:16]


@lru_cache(maxsize=None)
def _permutations(T: int) -> np.ndarray:
    # itertools order is lexicographic, so the first feasible row is the smallest witness
    return np.array(list(itertools.permutations(range(T))), dtype=np.int8).reshape(-1, T)


def enumerate_feasibility(costs: CostVector, K: int) -> OracleResult:
    """Check every permutation against the prefix bands."""
    T = costs.n_experts
    if T > ENUM_MAX_T:
        raise SizeError(f"enumeration limited to T <= {ENUM_MAX_T}, got T={T}")
    perms = _permutations(T)
    alphas = np.asarray(costs.alphas, dtype=np.float64)
    beta = costs.beta
    # prefix[:, m] = sum of the first m ordered alphas, m = 0..T-1
    prefix = np.zeros((len(perms), T))
    np.cumsum(alphas[perms[:, :-1]], axis=1, out=prefix[:, 1:])
    m = np.arange(T)
    lo, hi = m * beta, (m + K) * beta
    tol_lo = np.maximum(REL_TOL * np.maximum(np.abs(prefix), np.abs(lo)), ABS_TOL)
    tol_hi = np.maximum(REL_TOL * np.maximum(np.abs(prefix), np.abs(hi)), ABS_TOL)
    ok = ((prefix >= lo - tol_lo) & (prefix <= hi + tol_hi)).all(axis=1)
    hits = np.flatnonzero(ok)
    witness = tuple(int(i) for i in perms[hits[0]]) if len(hits) else None
    return OracleResult(
        instance_digest=instance_digest(costs, K),
        oracle_feasible=witness is not None,
        witness_order=witness,
        greedy_feasible=greedy_order(costs, K).feasible,
    )


@dataclass(frozen=True)
class ReplayViolation:
    kind: str  # overlap | causality | residency | duration | missing | makespan
    layer_id: int
    expert_id: int | None
    detail: str


def _close(x: float, y: float) -> bool:
    return math.isclose(x, y, rel_tol=REL_TOL, abs_tol=ABS_TOL)


def replay_check(
    events: Sequence[TimelineEvent],
    costs: CostVector | Mapping[int, CostVector],
    K: int,
    makespan: float | None = None,
) -> list[ReplayViolation]:
    """Re-verify a timeline from its events alone.

    ``costs`` is one cost vector shared by every layer or a mapping from
    layer id to cost vector. Returns an empty list for a clean trace.
    """
    out: list[ReplayViolation] = []
    by_layer: dict[int, dict[str, dict[int, list[TimelineEvent]]]] = defaultdict(
        lambda: {Stream.LOAD: defaultdict(list), Stream.COMPUTE: defaultdict(list)})
    for ev in events:
        by_layer[ev.layer_id][Stream(ev.stream)][ev.expert_id].append(ev)
        if ev.end < ev.start:
            out.append(ReplayViolation("duration", ev.layer_id, ev.expert_id,
                                       f"{ev.stream} ends before it starts"))

    for stream in (Stream.LOAD, Stream.COMPUTE):
        lane = sorted((ev for ev in events if Stream(ev.stream) is stream),
                      key=lambda ev: (ev.start, ev.end))
        for a, b in zip(lane, lane[1:]):
            if b.start < a.end and not _close(b.start, a.end):
                out.append(ReplayViolation(
                    "overlap", b.layer_id, b.expert_id,
                    f"{stream.value} of L{b.layer_id}.E{b.expert_id} starts at {b.start!r} "
                    f"before L{a.layer_id}.E{a.expert_id} ends at {a.end!r}"))

    for layer_id in sorted(by_layer):
        lanes = by_layer[layer_id]
        lc = costs.get(layer_id) if isinstance(costs, Mapping) else costs
        if lc is None:
            out.append(ReplayViolation("missing", layer_id, None, "no costs for layer"))
            continue
        experts = sorted(set(lanes[Stream.LOAD]) | set(lanes[Stream.COMPUTE]))
        staged = []
        for e in experts:
            loads, comps = lanes[Stream.LOAD].get(e, []), lanes[Stream.COMPUTE].get(e, [])
            if len(loads) != 1 or len(comps) != 1:
                out.append(ReplayViolation(
                    "missing", layer_id, e,
                    f"expected one load and one compute, got {len(loads)} and {len(comps)}"))
                continue
            if not 0 <= e < lc.n_experts:
                out.append(ReplayViolation("missing", layer_id, e, "expert id out of range"))
                continue
            load, comp = loads[0], comps[0]
            if not _close(load.end - load.start, lc.beta):
                out.append(ReplayViolation("duration", layer_id, e,
                                           f"load lasts {load.end - load.start!r}, beta={lc.beta!r}"))
            if not _close(comp.end - comp.start, lc.alphas[e]):
                out.append(ReplayViolation(
                    "duration", layer_id, e,
                    f"compute lasts {comp.end - comp.start!r}, alpha={lc.alphas[e]!r}"))
            if comp.start < load.end:
                out.append(ReplayViolation(
                    "causality", layer_id, e,
                    f"compute starts at {comp.start!r} before load ends at {load.end!r}"))
            else:
                staged.append((load.end, comp.start))
        peak, when = _peak_overlap(staged)
        if peak > K:
            out.append(ReplayViolation("residency", layer_id, None,
                                       f"{peak} experts staged at t={when!r}, K={K}"))

    if makespan is not None and events:
        actual = max(ev.end for ev in events)
        if actual != makespan:
            out.append(ReplayViolation("makespan", -1, None,
                                       f"report says {makespan!r}, events end at {actual!r}"))
    return out


def _peak_overlap(intervals) -> tuple[int, float | None]:
    """Max number of half-open intervals ``[a, b)`` covering one instant."""
    points = []
    for a, b in intervals:
        if b > a:
            points.append((a, 1))
            points.append((b, -1))
    points.sort()
    peak, cur, when = 0, 0, None
    for t, delta in points:
        cur += delta
        if cur > peak:
            peak, when = cur, t
    return peak, when


def gating_balance(n_tokens: int, n_experts: int, n_hash_bits: int, hidden_dim: int,
                   seeds: Sequence[int]) -> list[float]:
    """max/mean expert load of LSH routing on Gaussian tokens, one value per seed."""
    ratios = []
    for seed in seeds:
        model = GatingModel(projection_seed=seed, n_hash_bits=n_hash_bits, hidden_dim=hidden_dim)
        tokens = gaussian_tokens(n_tokens, hidden_dim, seed + 1_000_003)
        counts = np.asarray(route_tokens(model, tokens, n_experts).token_counts)
        ratios.append(float(counts.max() / counts.mean()))
    return ratios
