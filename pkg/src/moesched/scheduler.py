"""Expert computation orders that hide parameter loading behind compute.

An order is *feasible* for load time ``beta`` and staging capacity ``K`` when
every prefix of ``m`` ordered compute times (``m = 0 .. T-1``) lies in the
band ``[m * beta, (m + K) * beta]``. The lower edge means each load finishes
before the compute stream reaches it; the upper edge means no more than ``K``
loaded experts wait for the compute stream at once.

Comparisons use a relative tolerance of 1e-9 with an absolute floor of
1e-15 s.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Sequence

from .costs import CostVector
from .errors import ConfigError, SizeError

log = logging.getLogger(__name__)

REL_TOL = 1e-9
ABS_TOL = 1e-15
EXACT_MAX_T = 12


class Diagnosis(str, enum.Enum):
    FEASIBLE = "Feasible"
    TOO_LITTLE_COMPUTE = "TooLittleCompute"
    IMBALANCED = "Imbalanced"


class Method(str, enum.Enum):
    GREEDY = "Greedy"
    EXACT_FALLBACK = "ExactFallback"
    EXACT = "Exact"
    NAIVE = "Naive"


def _tol(x: float, y: float) -> float:
    return max(REL_TOL * max(abs(x), abs(y)), ABS_TOL)


def _ge(x: float, y: float) -> bool:
    return x >= y - _tol(x, y)


def _le(x: float, y: float) -> bool:
    return x <= y + _tol(x, y)


@dataclass(frozen=True)
class Violation:
    position: int  # prefix length m
    bound: str  # "lower" or "upper"
    prefix: float
    limit: float


@dataclass(frozen=True)
class ConstraintCheck:
    feasible: bool
    slack: tuple[float, ...]
    first_violation: Violation | None


@dataclass(frozen=True)
class Schedule:
    order: tuple[int, ...]
    feasible: bool
    slack: tuple[float, ...]
    method: Method
    diagnosis: Diagnosis | None = None
    first_violation: Violation | None = None
    counterexample: bool = False

    def to_dict(self) -> dict:
        return {
            "order": list(self.order),
            "feasible": self.feasible,
            "slack": list(self.slack),
            "method": self.method.value,
            "diagnosis": self.diagnosis.value if self.diagnosis else None,
            "first_violation": None if self.first_violation is None else {
                "position": self.first_violation.position,
                "bound": self.first_violation.bound,
            },
            "counterexample": self.counterexample,
        }


def _check_permutation(order: Sequence[int], n: int) -> tuple[int, ...]:
    order = tuple(int(i) for i in order)
    if sorted(order) != list(range(n)):
        raise ConfigError(f"order {list(order)} is not a permutation of 0..{n - 1}")
    return order


def check_constraints(order: Sequence[int], costs: CostVector, K: int) -> ConstraintCheck:
    """Verify the prefix bands for ``order``; report slack ``P_m - m*beta`` per position."""
    if K < 1:
        raise ConfigError(f"K must be >= 1, got {K}")
    order = _check_permutation(order, costs.n_experts)
    beta = costs.beta
    prefix = 0.0
    slack = []
    first = None
    for m in range(len(order)):
        lo, hi = m * beta, (m + K) * beta
        slack.append(prefix - lo)
        if first is None:
            if not _ge(prefix, lo):
                first = Violation(m, "lower", prefix, lo)
            elif not _le(prefix, hi):
                first = Violation(m, "upper", prefix, hi)
        prefix += costs.alphas[order[m]]
    return ConstraintCheck(first is None, tuple(slack), first)


def _finish(order, costs, K, method, **extra) -> Schedule:
    check = check_constraints(order, costs, K)
    return Schedule(tuple(order), check.feasible, check.slack, method,
                    first_violation=check.first_violation, **extra)


def greedy_order(costs: CostVector, K: int) -> Schedule:
    """Fill positions one at a time.

    At each position take the smallest remaining alpha that keeps the next
    prefix inside its band. If every remaining alpha is too small, take the
    largest; if the ones large enough all overshoot, take the smallest of
    those. Either fallback leaves the order infeasible, which the returned
    schedule reports. Ties go to the lower expert index.
    """
    if K < 1:
        raise ConfigError(f"K must be >= 1, got {K}")
    alphas = costs.alphas
    beta = costs.beta
    remaining = sorted(range(len(alphas)), key=lambda i: (alphas[i], i))
    order = []
    prefix = 0.0
    for m in range(1, len(alphas) + 1):
        lo, hi = m * beta, (m + K) * beta
        pick = None
        for idx in remaining:
            p = prefix + alphas[idx]
            if _ge(p, lo):
                pick = idx
                if not _le(p, hi):
                    log.debug("greedy: every candidate overshoots at position %d", m)
                break
        if pick is None:
            # max alpha, lowest index among ties
            top = alphas[remaining[-1]]
            pick = next(i for i in remaining if alphas[i] == top)
        remaining.remove(pick)
        order.append(pick)
        prefix += alphas[pick]
    schedule = _finish(order, costs, K, Method.GREEDY)
    if not schedule.feasible:
        schedule = _with_diagnosis(schedule, costs)
    return schedule


def exact_order(costs: CostVector, K: int, max_T: int = EXACT_MAX_T) -> Schedule:
    """Depth-first search over orders with prefix-band pruning.

    Returns the lexicographically smallest feasible order, or an infeasible
    schedule (identity order) when none exists. Subsets that were already
    proven dead are memoised, so the search visits at most ``2**T`` states.
    """
    T = costs.n_experts
    if T > max_T:
        raise SizeError(f"exact search limited to T <= {max_T}, got T={T}")
    if K < 1:
        raise ConfigError(f"K must be >= 1, got {K}")
    alphas = costs.alphas
    beta = costs.beta
    dead: set[int] = set()
    order: list[int] = []

    def search(mask: int, prefix: float) -> bool:
        m = len(order)
        if m == T - 1:
            order.append(next(i for i in range(T) if not mask >> i & 1))
            return True
        if mask in dead:
            return False
        lo, hi = (m + 1) * beta, (m + 1 + K) * beta
        tried = set()
        for i in range(T):
            if mask >> i & 1 or alphas[i] in tried:
                continue
            tried.add(alphas[i])
            p = prefix + alphas[i]
            if not (_ge(p, lo) and _le(p, hi)):
                continue
            order.append(i)
            if search(mask | 1 << i, p):
                return True
            order.pop()
        dead.add(mask)
        return False

    if T == 1 or search(0, 0.0):
        found = order if T > 1 else [0]
        return _finish(found, costs, K, Method.EXACT)
    schedule = _finish(list(range(T)), costs, K, Method.EXACT)
    return _with_diagnosis(schedule, costs)


def naive_order(costs: CostVector, K: int) -> Schedule:
    return _finish(list(range(costs.n_experts)), costs, K, Method.NAIVE)


def schedule_experts(costs: CostVector, K: int, max_T: int = EXACT_MAX_T) -> Schedule:
    """Greedy order, falling back to exact search when greedy fails and ``T <= max_T``.

    A greedy failure rescued by the exact search is logged and flagged as a
    counterexample on the returned schedule.
    """
    greedy = greedy_order(costs, K)
    if greedy.feasible or costs.n_experts > max_T:
        return greedy
    exact = exact_order(costs, K, max_T)
    if not exact.feasible:
        return greedy
    log.warning("greedy found no feasible order but exact search did: alphas=%s beta=%r K=%d",
                list(costs.alphas), costs.beta, K)
    return Schedule(exact.order, True, exact.slack, Method.EXACT_FALLBACK,
                    Diagnosis.FEASIBLE, counterexample=True)


def _compute_shortfall(costs: CostVector) -> bool:
    """True when even the largest ``T-1`` alphas cannot cover ``T-1`` loads."""
    T = costs.n_experts
    best = sum(sorted(costs.alphas, reverse=True)[:T - 1])
    return not _ge(best, (T - 1) * costs.beta)


def _with_diagnosis(schedule: Schedule, costs: CostVector) -> Schedule:
    kind = Diagnosis.TOO_LITTLE_COMPUTE if _compute_shortfall(costs) else Diagnosis.IMBALANCED
    return Schedule(schedule.order, schedule.feasible, schedule.slack, schedule.method, kind,
                    schedule.first_violation, schedule.counterexample)


def diagnose(costs: CostVector, K: int, max_T: int = EXACT_MAX_T) -> Diagnosis:
    """Why (or whether) no gapless order exists.

    For ``T > max_T`` only the greedy search is tried, so ``Imbalanced`` may
    be reported for an instance that has a feasible order greedy missed.
    """
    if schedule_experts(costs, K, max_T).feasible:
        return Diagnosis.FEASIBLE
    if _compute_shortfall(costs):
        return Diagnosis.TOO_LITTLE_COMPUTE
    return Diagnosis.IMBALANCED
