"""Model geometry, hardware profiles and the FLOP / byte counts derived from them.

FLOP convention: one multiply-add counts as 2 FLOPs. An expert is a single
feed-forward block, i.e. two projection matrices ``d_model x d_ff`` and
``d_ff x d_model``. Biases and layer norms are not counted.
"""

from __future__ import annotations

import json
import os
import warnings
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ConfigError

PRESETS_ENV = "MOE_SIM_PRESETS"


@dataclass(frozen=True)
class ModelGeometry:
    n_layers: int
    n_heads: int
    d_head: int
    d_model: int
    d_ff: int
    n_experts_per_layer: int
    bytes_per_param: int

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool) or not isinstance(value, int) or value <= 0:
                raise ConfigError(f"geometry.{f.name} must be a positive integer, got {value!r}")
        if self.d_model != self.n_heads * self.d_head:
            warnings.warn(
                f"d_model={self.d_model} != n_heads*d_head={self.n_heads * self.d_head}; "
                "attention dims are not used by the cost model",
                stacklevel=3,
            )

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class HardwareProfile:
    peak_flops: float
    h2d_bandwidth: float
    device_memory: int
    reserved_memory: int = 0

    def __post_init__(self):
        if not self.peak_flops > 0:
            raise ConfigError(f"hardware.peak_flops must be > 0, got {self.peak_flops!r}")
        if not self.h2d_bandwidth > 0:
            raise ConfigError(f"hardware.h2d_bandwidth must be > 0, got {self.h2d_bandwidth!r}")
        if self.reserved_memory < 0:
            raise ConfigError("hardware.reserved_memory must be >= 0")
        if not self.device_memory > self.reserved_memory:
            raise ConfigError("hardware.device_memory must exceed hardware.reserved_memory")

    @property
    def free_memory(self) -> int:
        return self.device_memory - self.reserved_memory

    def to_dict(self) -> dict:
        return asdict(self)


def expert_param_bytes(geometry: ModelGeometry) -> int:
    """Bytes of one expert's weights: two ``d_model x d_ff`` projections."""
    return 2 * geometry.d_model * geometry.d_ff * geometry.bytes_per_param


def expert_flops(geometry: ModelGeometry, n_tokens: int) -> int:
    """FLOPs for ``n_tokens`` tokens through one expert (two matmuls, 2 FLOPs per MAC)."""
    if n_tokens < 0:
        raise ConfigError(f"n_tokens must be >= 0, got {n_tokens}")
    return 4 * int(n_tokens) * geometry.d_model * geometry.d_ff


# Table dimensions of the CPM family. bytes_per_param is never part of a
# preset and must be given explicitly.
BUILTIN_PRESETS: dict[str, dict[str, int]] = {
    "cpm-small": dict(n_layers=12, n_heads=12, d_head=64, d_ff=3072, d_model=768),
    "cpm-medium": dict(n_layers=24, n_heads=16, d_head=64, d_ff=4096, d_model=1024),
    "cpm-large": dict(n_layers=32, n_heads=32, d_head=80, d_ff=10240, d_model=2560),
    "cpm2": dict(n_layers=24, n_heads=64, d_head=64, d_ff=10240, d_model=4096,
                 n_experts_per_layer=32),
}


def load_presets() -> dict[str, dict[str, int]]:
    """Built-in presets merged with ``*.json`` files from ``$MOE_SIM_PRESETS``.

    Each extra file is named ``<preset>.json`` and holds geometry fields.
    """
    presets = {k: dict(v) for k, v in BUILTIN_PRESETS.items()}
    extra = os.environ.get(PRESETS_ENV)
    if extra:
        directory = Path(extra)
        if not directory.is_dir():
            raise ConfigError(f"{PRESETS_ENV}={extra!r} is not a directory")
        for path in sorted(directory.glob("*.json")):
            try:
                data = json.loads(path.read_text())
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
            if not isinstance(data, dict):
                raise ConfigError(f"{path}: preset must be a JSON object")
            presets[path.stem] = data
    return presets


def geometry_from_preset(name: str, **overrides) -> ModelGeometry:
    presets = load_presets()
    if name not in presets:
        raise ConfigError(f"unknown geometry preset {name!r}; known: {sorted(presets)}")
    values = {**presets[name], **overrides}
    missing = [f.name for f in fields(ModelGeometry) if f.name not in values]
    if missing:
        raise ConfigError(f"geometry preset {name!r} needs explicit {', '.join(missing)}")
    unknown = set(values) - {f.name for f in fields(ModelGeometry)}
    if unknown:
        raise ConfigError(f"unknown geometry fields: {sorted(unknown)}")
    return ModelGeometry(**values)
