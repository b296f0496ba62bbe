"""Counter-based random numbers keyed by integer coordinates.

Every draw is a pure function of ``(seed, stream, *counters)``, e.g.
``(seed, TRANSITION, rep, stage, agent)``. There is no generator state, so a
simulation gives identical numbers however its replications are split
across workers or in which order they are evaluated.

The hash chains the SplitMix64 finalizer over the key words; each step is a
bijection of the next counter for a fixed prefix, so distinct keys with a
common prefix never collide.
"""
from __future__ import annotations

import numpy as np

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_SEED_SALT = np.uint64(0x2545F4914F6CDD1D)

# stream tags
INITIAL = 1
TRANSITION = 2
NOISE = 3
IID = 4


def _mix(x: np.ndarray) -> np.ndarray:
    x = x ^ (x >> np.uint64(30))
    x = x * _M1
    x = x ^ (x >> np.uint64(27))
    x = x * _M2
    return x ^ (x >> np.uint64(31))


def _u64(v) -> np.ndarray:
    v = np.asarray(v)
    if v.dtype.kind == "i" and np.any(v < 0):
        raise ValueError("counters must be nonnegative")
    return v.astype(np.uint64)


def hash_counters(seed: int, *counters) -> np.ndarray:
    """64-bit hash of ``(seed, *counters)``; counters broadcast against each other."""
    with np.errstate(over="ignore"):
        h = _mix(np.asarray(np.uint64(seed % 2**64) ^ _SEED_SALT))
        for c in counters:
            h = _mix(h + (_u64(c) + np.uint64(1)) * _GAMMA)
    return h


def uniforms(seed: int, *counters) -> np.ndarray:
    """Doubles in ``[0, 1)`` with 53 random bits, one per broadcast key."""
    return (hash_counters(seed, *counters) >> np.uint64(11)).astype(np.float64) * 2.0**-53


def derive_seed(seed: int, *labels: int) -> int:
    """Sub-seed for a labelled sub-experiment (e.g. subcommand, n)."""
    return int(hash_counters(seed, *labels))


def inverse_cdf(u: np.ndarray, pmf: np.ndarray) -> np.ndarray:
    """Sample indices by inverse CDF.

    ``pmf`` has the category axis last and broadcasts against ``u``. The
    category order is fixed (0, 1, ...), and rounding slack in the last
    cumulative value falls to the final category.
    """
    cum = np.cumsum(pmf, axis=-1)[..., :-1]
    return (cum <= u[..., None]).sum(axis=-1)
