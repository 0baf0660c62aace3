"""SplitMix64: a named, seedable, portable 64-bit generator.

The simulator needs identical candidate/accept/mark draws on every platform,
which rules out generators whose bit streams are implementation-defined.
SplitMix64 (Steele, Lea & Flood 2014) is a tiny counter-based generator with
a published reference sequence; its state is one uint64 and the update is
two multiplies and three xor-shifts, so it runs unchanged inside jitted code.

Stream splitting rule: stream k of master seed s starts from
``mix64(s + (k + 1) * GOLDEN)``.  The simulator uses stream 0 for thinning
(waiting times, acceptance, component choice) and stream j for the marks of
component j, so adding components never perturbs earlier streams.
"""

from __future__ import annotations

import numba
import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U53 = 1.0 / (1 << 53)


@numba.njit(numba.uint64(numba.uint64), cache=True)
def mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@numba.njit(numba.uint64(numba.uint64, numba.uint64), cache=True)
def stream_state(seed, k):
    return mix64(seed + (k + np.uint64(1)) * GOLDEN)


@numba.njit(cache=True)
def next_u64(state, k):
    """Advance stream k held in the uint64 state array; returns the raw draw."""
    state[k] += GOLDEN
    return mix64(state[k])


@numba.njit(cache=True)
def next_uniform(state, k):
    """Uniform on [0, 1) with 53-bit resolution."""
    return (next_u64(state, k) >> np.uint64(11)) * _U53


@numba.njit(cache=True)
def next_exponential(state, k, rate):
    """Exponential waiting time with the given rate."""
    u = next_uniform(state, k)
    return -np.log1p(-u) / rate


def make_states(seed: int, n_streams: int) -> np.ndarray:
    """Initial state vector for streams 0..n_streams-1 of the master seed."""
    states = np.empty(n_streams, dtype=np.uint64)
    s = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    for k in range(n_streams):
        states[k] = stream_state(s, np.uint64(k))
    return states
