"""Seeded random streams and block-parallel Monte Carlo reduction.

Every Monte Carlo loop in the package is split into fixed-size blocks of
trials.  Block ``b`` of a stream draws from its own counter-based generator
keyed by ``(master_seed, *stream_id, b)``, so the per-trial values (and
therefore every reduced statistic) do not depend on how many workers
evaluate the blocks or in which order they finish.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

BLOCK_SIZE = 512
Z95 = 1.959963984540054

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream identified by a seed and a key path.

    ``stream_id`` is a tuple of non-negative integers; :meth:`child` appends
    one more component, which gives a tree of independent streams (purpose
    tags, trial blocks, grid cells...).
    """

    master_seed: int
    stream_id: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "master_seed", int(self.master_seed) & _MASK64)
        object.__setattr__(self, "stream_id", tuple(int(k) for k in self.stream_id))
        if any(k < 0 for k in self.stream_id):
            raise ValueError("stream_id components must be non-negative")

    def child(self, *keys: int) -> "RngStream":
        return RngStream(self.master_seed, self.stream_id + tuple(keys))

    def seed_sequence(self) -> np.random.SeedSequence:
        return np.random.SeedSequence(self.master_seed, spawn_key=self.stream_id)

    def generator(self) -> np.random.Generator:
        """Fresh Philox generator; identical streams give identical draws."""
        return np.random.Generator(np.random.Philox(self.seed_sequence()))


def as_stream(stream: RngStream | int) -> RngStream:
    if isinstance(stream, RngStream):
        return stream
    return RngStream(int(stream))


@dataclass(frozen=True)
class MCEstimate:
    """Sample mean of per-trial values with a 95% normal-approximation radius."""

    mean: float
    ci_radius: float
    trials: int
    std: float = float("nan")

    @classmethod
    def from_values(cls, values: np.ndarray) -> "MCEstimate":
        values = np.asarray(values, dtype=float)
        n = values.size
        if n == 0:
            raise ValueError("no Monte Carlo values")
        mean = float(np.mean(values))
        std = float(np.std(values, ddof=1)) if n > 1 else 0.0
        return cls(mean, Z95 * std / math.sqrt(n), n, std)

    def covers(self, value: float, radii: float = 3.0) -> bool:
        # the rounding slack matters only for degenerate zero-variance estimates
        slack = 1e-12 * max(abs(value), abs(self.mean))
        return abs(self.mean - value) <= radii * self.ci_radius + slack

    def __float__(self) -> float:
        return self.mean


def block_sizes(trials: int, block_size: int = BLOCK_SIZE) -> list[int]:
    full, rest = divmod(int(trials), block_size)
    return [block_size] * full + ([rest] if rest else [])


def map_blocks(
    fn: Callable[[np.random.Generator, int], np.ndarray],
    trials: int,
    stream: RngStream,
    workers: int = 1,
    block_size: int = BLOCK_SIZE,
) -> np.ndarray:
    """Evaluate ``fn(gen, size)`` on every block and concatenate in block order.

    ``fn`` must return an array whose first axis has length ``size``.
    """
    sizes = block_sizes(trials, block_size)
    if not sizes:
        raise ValueError("trials must be positive")

    def run(b: int) -> np.ndarray:
        return np.asarray(fn(stream.child(b).generator(), sizes[b]))

    if workers <= 1 or len(sizes) == 1:
        parts = [run(b) for b in range(len(sizes))]
    else:
        with ThreadPoolExecutor(max_workers=min(workers, len(sizes))) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    return np.concatenate(parts, axis=0)


def parallel_map(fn: Callable, items: Sequence, workers: int = 1) -> list:
    """Order-preserving map over independent cells."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


def proportion_radius(p_hat: float, trials: int) -> float:
    return Z95 * math.sqrt(max(p_hat * (1.0 - p_hat), 0.0) / trials)
