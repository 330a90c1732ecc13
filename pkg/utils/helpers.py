from __future__ import annotations

import numpy as np

from config.models import PS_PER_SECOND, RandomSeed
from services.exceptions import InvalidArgumentError

SPEED_OF_LIGHT = 299_792_458.0
"""Metres per second, exact by SI definition."""

_SEED_LIMIT = 2**64


def seconds_to_ps(seconds: float) -> int:
    return int(round(seconds * PS_PER_SECOND))


def ps_to_seconds(picoseconds: int) -> float:
    return picoseconds / PS_PER_SECOND


def ns_to_ps(nanoseconds: float) -> int:
    return int(round(nanoseconds * 1000))


def propagation_delay(path_length: float) -> float:
    """Light travel time in seconds over `path_length` metres."""
    if path_length < 0:
        raise InvalidArgumentError(
            f"path_length must be >= 0 metres, got {path_length}"
        )
    return path_length / SPEED_OF_LIGHT


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < _SEED_LIMIT:
        raise InvalidArgumentError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def derive_seed(seed: RandomSeed | int, *path: int) -> RandomSeed:
    """Child seed for a position in the spawn tree below `seed`.

    SeedSequence hashes the entropy together with the spawn key, so distinct
    paths give statistically independent, collision-resistant children.
    """
    seed = _check_seed(seed)
    if any(int(index) < 0 for index in path):
        raise InvalidArgumentError(f"seed path indices must be >= 0, got {path}")
    sequence = np.random.SeedSequence(
        entropy=seed, spawn_key=tuple(int(index) for index in path)
    )
    return RandomSeed(int(sequence.generate_state(1, dtype=np.uint64)[0]))


def split_seed(seed: RandomSeed | int, run_index: int) -> RandomSeed:
    if run_index < 0:
        raise InvalidArgumentError(f"run_index must be >= 0, got {run_index}")
    return derive_seed(seed, run_index)


def make_rng(seed: RandomSeed | int) -> np.random.Generator:
    return np.random.default_rng(_check_seed(seed))


def format_rate(rate: float | None) -> str:
    if rate is None:
        return "N/A"
    if rate == 0:
        return "0"
    if abs(rate) >= 1000:
        return f"{rate:,.0f}"
    return f"{rate:.4g}"
