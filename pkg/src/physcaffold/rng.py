"""Counter-keyed deterministic random streams.

Every uniform draw is a pure function of (seed, agent_id, step, draw index),
so simulation results are independent of evaluation order and worker count.
The generator is a splitmix64-style finalizer over an injectively packed
counter; draw indices are packed in 5 bits (32 uniform pairs per agent-step).
"""

from __future__ import annotations

import numpy as np
from numba import njit

_GOLD = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_INV32 = 2.0 ** -32

# Sentinel step id for initialization draws; step counters must stay below it.
INIT_STEP = (1 << 27) - 1
MAX_PAIRS = 32


@njit(cache=True, inline="always")
def mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, inline="always")
def pack_counter(agent_id, step, pair):
    return (np.uint64(agent_id) << np.uint64(32)) | (np.uint64(step) << np.uint64(5)) | np.uint64(pair)


@njit(cache=True, inline="always")
def hash_counter(seed_mixed, agent_id, step, pair):
    return mix64(seed_mixed + pack_counter(agent_id, step, pair) * _GOLD)


@njit(cache=True, inline="always")
def uniform_pair(seed_mixed, agent_id, step, pair):
    """Two independent uniforms in [0, 1) from one hash."""
    h = hash_counter(seed_mixed, agent_id, step, pair)
    return (h >> np.uint64(32)) * _INV32, (h & np.uint64(0xFFFFFFFF)) * _INV32


@njit(cache=True)
def _mix_seed(seed):
    return mix64(np.uint64(seed) + _GOLD)


def mixed_seed(seed: int) -> np.uint64:
    """Pre-whitened seed word shared by all streams of one run."""
    # numba hands the uint64 back as a Python int; re-wrap so downstream
    # kernel calls don't try (and fail) to fit values >= 2**63 into int64.
    return np.uint64(_mix_seed(np.uint64(seed & 0xFFFFFFFFFFFFFFFF)))


def uniform_block(seed: int, agent_ids, step: int, n_pairs: int) -> np.ndarray:
    """Vectorized draws: returns (len(agent_ids), 2 * n_pairs) uniforms in [0, 1).

    Column 2p / 2p+1 hold the first / second uniform of pair p, matching
    uniform_pair exactly.
    """
    sm = mixed_seed(seed)
    agents = np.asarray(agent_ids, dtype=np.uint64)
    pairs = np.arange(n_pairs, dtype=np.uint64)
    ctr = ((agents[:, None] << np.uint64(32))
           | np.uint64((step << 5)) | pairs[None, :])
    z = sm + ctr * _GOLD
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    z ^= z >> np.uint64(31)
    out = np.empty((len(agents), 2 * n_pairs), dtype=np.float64)
    out[:, 0::2] = (z >> np.uint64(32)) * _INV32
    out[:, 1::2] = (z & np.uint64(0xFFFFFFFF)) * _INV32
    return out


class CounterStream:
    """Sequential view of one (seed, agent_id, step) stream.

    Hands out the stream's uniforms in draw order; used by the scalar
    sampling APIs and tests.  The simulation kernel addresses the same
    draws directly by pair index.
    """

    def __init__(self, seed: int, agent_id: int = 0, step: int = 0):
        self._sm = mixed_seed(seed)
        self.agent_id = agent_id
        self.step = step
        self._pair = 0
        self._pending: float | None = None

    def uniform(self) -> float:
        if self._pending is not None:
            u = self._pending
            self._pending = None
            return u
        if self._pair >= MAX_PAIRS:
            # Sequential consumers may outrun the 5-bit pair space; roll into
            # the next step slot to keep draws unique.
            self.step += 1
            self._pair = 0
        a, b = uniform_pair(self._sm, np.uint64(self.agent_id),
                            np.uint64(self.step), np.uint64(self._pair))
        self._pair += 1
        self._pending = float(b)
        return float(a)
