"""Counter-addressable random streams.

Every random quantity in a simulation is a uniform draw addressed by
``(seed, run, kind, index, time)``. Each ``(seed, run, kind, index)`` maps to
its own PCG64 generator; draw ``t`` is the ``t``-th raw 64-bit output, so any
single draw can be reached with ``advance`` and batch draws agree with
single draws bit for bit.
"""

from __future__ import annotations

import numpy as np

OBSERVATION = 1
TREND = 2
BRANCH = 3
MATRIX = 4

_SCALE = 2.0 ** -53


def _bitgen(seed: int, run: int, kind: int, index: int) -> np.random.PCG64:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(run), int(kind), int(index)))
    return np.random.PCG64(ss)


def uniforms(seed: int, kind: int, index: int, start: int, n: int, run: int = 0) -> np.ndarray:
    """Draws ``start .. start+n-1`` (1-based times) of one stream, in (0, 1)."""
    if start < 1:
        raise ValueError("stream times are 1-based")
    bg = _bitgen(seed, run, kind, index)
    if start > 1:
        bg.advance(start - 1)
    raw = bg.random_raw(n)
    return ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _SCALE


def uniform(seed: int, kind: int, index: int, time: int, run: int = 0) -> float:
    return float(uniforms(seed, kind, index, time, 1, run)[0])


class Streams:
    """Stream addresses for one run of one experiment."""

    def __init__(self, seed: int, run: int = 0):
        self.seed = int(seed)
        self.run = int(run)

    def block(self, kind: int, index: int, start: int, n: int) -> np.ndarray:
        return uniforms(self.seed, kind, index, start, n, self.run)

    def observations(self, num_agents: int, start: int, n: int) -> np.ndarray:
        """Uniforms of shape ``(n, num_agents)`` for times ``start..start+n-1``."""
        if n == 0:
            return np.empty((0, num_agents))
        return np.stack([self.block(OBSERVATION, k, start, n) for k in range(num_agents)], axis=1)

    def trends(self, start: int, n: int) -> np.ndarray:
        return self.block(TREND, 0, start, n)

    def __repr__(self):
        return f"Streams(seed={self.seed}, run={self.run})"
