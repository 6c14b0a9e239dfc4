"""Counter-based deterministic random numbers.

A draw is a pure function of (seed, counter position), so a checkpoint
that records the position can replay the exact stream on any platform.
The generator is a splitmix64 finalizer applied to the counter; Gaussians
use Box-Muller with two counter slots per value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64_MASK = (1 << 64) - 1


def _mix64(x: np.ndarray) -> np.ndarray:
    x = (x ^ (x >> np.uint64(30))) * _MIX1
    x = (x ^ (x >> np.uint64(27))) * _MIX2
    return x ^ (x >> np.uint64(31))


@dataclass
class RngState:
    seed: int
    position: int = 0
    algorithm: str = field(default="splitmix64-boxmuller")

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "seed": int(self.seed),
            "position": int(self.position),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RngState":
        return cls(
            seed=int(d["seed"]),
            position=int(d["position"]),
            algorithm=d.get("algorithm", "splitmix64-boxmuller"),
        )


def derive_seed(seed: int, tag: int) -> int:
    """A decorrelated child seed for an independent stream."""
    base = ((seed ^ (tag * 0x9E3779B97F4A7C15)) + 0x9E3779B97F4A7C15) & _U64_MASK
    return int(_mix64(np.array([base], dtype=np.uint64))[0])


def _raw_uniforms(state: RngState, n: int) -> np.ndarray:
    counters = np.arange(state.position, state.position + n, dtype=np.uint64)
    words = _mix64((counters + np.uint64(1)) * _GOLDEN + np.uint64(state.seed & _U64_MASK))
    state.position += n
    # (0, 1): top 53 bits, offset by half an ulp so log() stays finite
    return ((words >> np.uint64(11)).astype(np.float64) + 0.5) * (2.0**-53)


def seeded_uniform(state: RngState, rows: int, cols: int) -> np.ndarray:
    """Uniform (0,1) matrix, advancing the stream by rows*cols slots."""
    return _raw_uniforms(state, rows * cols).reshape(rows, cols)


def seeded_gaussian(
    state: RngState, rows: int, cols: int, mean: float = 0.0, std: float = 1.0
) -> np.ndarray:
    """Gaussian matrix, advancing the stream by 2*rows*cols slots."""
    if std < 0:
        raise ValidationError(f"std must be >= 0, got {std}")
    n = rows * cols
    u = _raw_uniforms(state, 2 * n)
    z = np.sqrt(-2.0 * np.log(u[:n])) * np.cos(2.0 * np.pi * u[n:])
    return (mean + std * z).reshape(rows, cols)


def seeded_ints(state: RngState, n: int, high: int) -> np.ndarray:
    """n integers uniform on [0, high)."""
    if high <= 0:
        raise ValidationError(f"high must be positive, got {high}")
    u = _raw_uniforms(state, n)
    return np.minimum((u * high).astype(np.int64), high - 1)


def subsample(state: RngState, values: np.ndarray, limit: int) -> np.ndarray:
    """Draw ``limit`` entries without replacement (partial Fisher-Yates).

    Returns ``values`` unchanged when it is already small enough.
    """
    n = values.shape[0]
    if n <= limit:
        return values
    u = _raw_uniforms(state, limit)
    idx = np.arange(n)
    out = np.empty(limit, dtype=values.dtype)
    for i in range(limit):
        j = i + int(u[i] * (n - i))
        idx[i], idx[j] = idx[j], idx[i]
        out[i] = values[idx[i]]
    return out
