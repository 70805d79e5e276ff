"""Counter-based random streams keyed by (master seed, realization, lattice cell).

Each draw is a pure function of its key, so a cell's radius does not depend on
which window it was sampled in, nor on the order in which realizations run.
"""
from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def mix64(x: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer, applied elementwise to a uint64 array."""
    z = np.asarray(x, dtype=np.uint64) + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _as_u64(values) -> np.ndarray:
    # two's complement reinterpretation so negative lattice indices are fine
    return np.asarray(values, dtype=np.int64).view(np.uint64)


def cell_keys(master_seed: int, realization: int, cells: np.ndarray) -> np.ndarray:
    """64-bit key per cell; ``cells`` has shape (n, d) of integer lattice indices."""
    cells = np.atleast_2d(np.asarray(cells, dtype=np.int64))
    head = mix64(np.array([master_seed & _MASK64], dtype=np.uint64))
    head = mix64(head ^ _as_u64([realization]))
    h = np.repeat(head, cells.shape[0])
    for k in range(cells.shape[1]):
        h = mix64(h ^ _as_u64(cells[:, k]) ^ np.uint64(k + 1))
    return h


def uniforms(master_seed: int, realization: int, cells: np.ndarray) -> np.ndarray:
    """One uniform draw in [0, 1) per cell, with 53 bits of resolution."""
    bits = mix64(cell_keys(master_seed, realization, cells)) >> np.uint64(11)
    return bits.astype(np.float64) * (1.0 / 9007199254740992.0)
