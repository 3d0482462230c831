"""Per-expert token counts: random-projection LSH routing and synthetic generators."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError

# Recorded in trace headers so runs can be replayed on another platform.
PRNG_NAME = f"numpy.random.PCG64 (numpy {np.__version__})"

_ROUTE_CHUNK = 8192


@dataclass(frozen=True)
class ExpertWorkload:
    layer_id: int
    token_counts: tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(c) for c in self.token_counts)
        if not counts:
            raise ConfigError("workload needs at least one expert")
        if any(c < 0 for c in counts):
            raise ConfigError("token counts must be >= 0")
        object.__setattr__(self, "token_counts", counts)

    @property
    def total_tokens(self) -> int:
        return sum(self.token_counts)

    @property
    def n_experts(self) -> int:
        return len(self.token_counts)


@dataclass(frozen=True)
class GatingModel:
    """Untrained gating: sign bits of a fixed Gaussian projection of the hidden state.

    Hash codes are mapped to experts by ``code % n_experts``. When
    ``2**n_hash_bits`` is not a multiple of ``n_experts`` the low expert ids
    receive more codes than the high ones.
    """

    projection_seed: int
    n_hash_bits: int
    hidden_dim: int

    def __post_init__(self):
        if self.n_hash_bits < 1 or self.n_hash_bits > 62:
            raise ConfigError("n_hash_bits must be in [1, 62]")
        if self.hidden_dim < 1:
            raise ConfigError("hidden_dim must be >= 1")

    def projection(self) -> np.ndarray:
        rng = np.random.default_rng(self.projection_seed)
        return rng.standard_normal((self.hidden_dim, self.n_hash_bits))

    def hash_codes(self, tokens: np.ndarray) -> np.ndarray:
        tokens = np.asarray(tokens, dtype=np.float64)
        if tokens.ndim != 2 or tokens.shape[1] != self.hidden_dim:
            raise ConfigError(
                f"tokens must have shape (n, {self.hidden_dim}), got {tokens.shape}"
            )
        weights = 1 << np.arange(self.n_hash_bits, dtype=np.int64)
        proj = self.projection()
        codes = np.empty(len(tokens), dtype=np.int64)
        for lo in range(0, len(tokens), _ROUTE_CHUNK):
            bits = (tokens[lo:lo + _ROUTE_CHUNK] @ proj) > 0
            codes[lo:lo + _ROUTE_CHUNK] = bits @ weights
        return codes


def route_tokens(model: GatingModel, tokens, n_experts: int, layer_id: int = 0) -> ExpertWorkload:
    """Assign every token to one expert and count tokens per expert."""
    if n_experts < 1:
        raise ConfigError("n_experts must be >= 1")
    if 2 ** model.n_hash_bits < n_experts:
        raise ConfigError(
            f"{model.n_hash_bits} hash bits give {2 ** model.n_hash_bits} codes, "
            f"fewer than {n_experts} experts"
        )
    experts = assign_experts(model, tokens, n_experts)
    counts = np.bincount(experts, minlength=n_experts)
    return ExpertWorkload(layer_id, tuple(counts.tolist()))


def assign_experts(model: GatingModel, tokens, n_experts: int) -> np.ndarray:
    return model.hash_codes(tokens) % n_experts


def gaussian_tokens(n_tokens: int, hidden_dim: int, seed: int) -> np.ndarray:
    """Synthetic i.i.d. standard-normal hidden states."""
    return np.random.default_rng(seed).standard_normal((n_tokens, hidden_dim))


SYNTHETIC_KINDS = ("uniform", "zipf", "balanced", "explicit")


def synthetic_workload(
    kind: str,
    total_tokens: int,
    n_experts: int,
    seed: int = 0,
    *,
    s: float = 1.0,
    counts: Sequence[int] | None = None,
    layer_id: int = 0,
) -> ExpertWorkload:
    """Parametric workload generators.

    ``balanced`` splits tokens evenly, remainder to the lowest expert ids.
    ``uniform`` and ``zipf`` draw one expert per token; zipf uses
    ``P(expert i) ~ (i + 1) ** -s``. ``explicit`` takes ``counts`` verbatim.
    """
    if total_tokens < 0:
        raise ConfigError("total_tokens must be >= 0")
    if n_experts < 1:
        raise ConfigError("n_experts must be >= 1")
    rng = np.random.default_rng(seed)
    if kind == "balanced":
        q, r = divmod(total_tokens, n_experts)
        out = [q + 1 if i < r else q for i in range(n_experts)]
    elif kind == "uniform":
        out = rng.multinomial(total_tokens, np.full(n_experts, 1.0 / n_experts)).tolist()
    elif kind == "zipf":
        if not s > 0:
            raise ConfigError(f"zipf exponent must be > 0, got {s}")
        p = np.arange(1, n_experts + 1, dtype=np.float64) ** -s
        out = rng.multinomial(total_tokens, p / p.sum()).tolist()
    elif kind == "explicit":
        if counts is None:
            raise ConfigError("explicit workload needs counts")
        out = [int(c) for c in counts]
        if len(out) != n_experts:
            raise ConfigError(f"explicit counts have {len(out)} entries, expected {n_experts}")
        if sum(out) != total_tokens:
            raise ConfigError(f"explicit counts sum to {sum(out)}, expected {total_tokens}")
    else:
        raise ConfigError(f"unknown workload kind {kind!r}; expected one of {SYNTHETIC_KINDS}")
    return ExpertWorkload(layer_id, tuple(out))


def read_workload_csv(path, layer_id: int = 0) -> ExpertWorkload:
    """Read ``expert_id,token_count`` rows; every id in ``0..n-1`` must appear once."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or {"expert_id", "token_count"} - set(reader.fieldnames):
            raise ConfigError(f"{path}: expected header 'expert_id,token_count'")
        rows = {}
        for lineno, row in enumerate(reader, start=2):
            try:
                eid, count = int(row["expert_id"]), int(row["token_count"])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{path}:{lineno}: {exc}") from exc
            if eid in rows:
                raise ConfigError(f"{path}:{lineno}: duplicate expert_id {eid}")
            if count < 0:
                raise ConfigError(f"{path}:{lineno}: negative token_count")
            rows[eid] = count
    if sorted(rows) != list(range(len(rows))):
        raise ConfigError(f"{path}: expert ids must be exactly 0..{len(rows) - 1}")
    return ExpertWorkload(layer_id, tuple(rows[i] for i in range(len(rows))))


def write_workload_csv(workload: ExpertWorkload, path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["expert_id", "token_count"])
        for i, c in enumerate(workload.token_counts):
            writer.writerow([i, c])
