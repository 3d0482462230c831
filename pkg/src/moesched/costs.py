"""Per-expert compute times (alphas) and the shared load time (beta)."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

from .config import HardwareProfile, ModelGeometry, expert_flops, expert_param_bytes
from .errors import CapacityError, ConfigError
from .gating import ExpertWorkload


@dataclass(frozen=True)
class CostVector:
    """Scheduler input: ``alphas[i]`` seconds of compute per expert, ``beta`` seconds per load."""

    alphas: tuple[float, ...]
    beta: float
    derivation: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        alphas = tuple(float(a) for a in self.alphas)
        if not alphas:
            raise ConfigError("cost vector needs at least one expert")
        if any(not a >= 0 for a in alphas):
            raise ConfigError("alphas must be >= 0")
        if not float(self.beta) > 0:
            raise ConfigError(f"beta must be > 0, got {self.beta!r}")
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "beta", float(self.beta))

    @property
    def n_experts(self) -> int:
        return len(self.alphas)

    @classmethod
    def from_dict(cls, data: dict) -> "CostVector":
        try:
            return cls(tuple(data["alphas"]), data["beta"], {"source": "explicit"})
        except KeyError as exc:
            raise ConfigError(f"costs: missing field {exc.args[0]!r}") from exc
        except TypeError as exc:
            raise ConfigError(f"costs: {exc}") from exc

    def to_dict(self) -> dict:
        return {"alphas": list(self.alphas), "beta": self.beta}


def compute_costs(
    workload: ExpertWorkload,
    geometry: ModelGeometry,
    hw: HardwareProfile,
    overhead: float = 0.0,
    *,
    geometry_id: str = "",
    hardware_id: str = "",
) -> CostVector:
    """FLOPs / peak throughput per expert, expert bytes / host-to-device bandwidth.

    ``overhead`` is a fixed latency added to every load and every compute,
    for sensitivity studies. It is 0 for the pure ratio model.
    """
    if workload.n_experts != geometry.n_experts_per_layer:
        raise ConfigError(
            f"workload has {workload.n_experts} experts, geometry has "
            f"{geometry.n_experts_per_layer}"
        )
    if not hw.peak_flops > 0 or not hw.h2d_bandwidth > 0:
        raise ConfigError("peak_flops and h2d_bandwidth must be > 0")
    if overhead < 0:
        raise ConfigError("overhead must be >= 0")
    alphas = tuple(expert_flops(geometry, n) / hw.peak_flops + overhead
                   for n in workload.token_counts)
    beta = expert_param_bytes(geometry) / hw.h2d_bandwidth + overhead
    derivation = {
        "geometry": geometry_id or "custom",
        "hardware": hardware_id or "custom",
        "layer": workload.layer_id,
        "total_tokens": workload.total_tokens,
        "overhead": overhead,
    }
    return CostVector(alphas, beta, derivation)


def resident_capacity(geometry: ModelGeometry, hw: HardwareProfile,
                      override: int | None = None) -> int:
    """Number of experts that fit in free device memory, optionally capped by ``override``."""
    capacity = hw.free_memory // expert_param_bytes(geometry)
    if capacity < 1:
        raise CapacityError(
            f"expert does not fit in device memory: {expert_param_bytes(geometry)} bytes "
            f"needed, {hw.free_memory} free"
        )
    if override is None:
        return capacity
    if override < 1:
        raise ConfigError(f"K must be >= 1, got {override}")
    if override > capacity:
        warnings.warn(f"K={override} exceeds memory capacity {capacity}; clamped", stacklevel=2)
        return capacity
    return override

