from __future__ import annotations

import logging

import numpy as np

from config.models import Channel, RandomSeed, SplitterConfig
from services.exceptions import InvalidArgumentError
from services.streams import IntensityTrace, PairStream, TimeTagStream
from utils.helpers import make_rng, ps_to_seconds

logger = logging.getLogger(__name__)

COARSE_BIN_FACTOR = 10
"""Thermal traces need at least this many bins per coherence time."""


def _check_rate(rate: float, duration: int, what: str = "rate") -> None:
    if not rate > 0:
        raise InvalidArgumentError(f"{what} must be > 0, got {rate}")
    if duration <= 0:
        raise InvalidArgumentError(f"duration must be > 0 ps, got {duration}")


def _check_splitter(splitter: SplitterConfig) -> None:
    problems = splitter.problems()
    if problems:
        raise InvalidArgumentError("; ".join(problems))


def _poisson_times(
    rng: np.random.Generator, rate: float, duration: int
) -> np.ndarray:
    """Homogeneous Poisson arrivals on [0, duration) ps.

    Given the total count, Poisson arrival times are i.i.d. uniform, so a
    sorted uniform sample has exactly the exponential inter-arrival law.
    """
    n = rng.poisson(rate * ps_to_seconds(duration))
    return np.sort(rng.integers(0, duration, size=n, dtype=np.int64))


def gen_coherent_tags(
    rate: float,
    duration: int,
    seed: RandomSeed | int,
    channel: Channel = Channel.A,
) -> TimeTagStream:
    """Photon arrivals of stable laser light at `rate` Hz."""
    _check_rate(rate, duration)
    times = _poisson_times(make_rng(seed), rate, duration)
    return TimeTagStream.single(times, channel, duration)


def gen_thermal_trace(
    mean_rate: float,
    coherence_time: int,
    bin_width: int,
    duration: int,
    seed: RandomSeed | int,
) -> IntensityTrace:
    """Fluctuating thermal intensity as a step process.

    A fresh level is drawn from an exponential distribution with mean
    `mean_rate` every `coherence_time`; the level holds (no interpolation)
    until the next draw, so ⟨I²⟩/⟨I⟩² tends to 2.
    """
    _check_rate(mean_rate, duration, "mean_rate")
    if coherence_time <= 0:
        raise InvalidArgumentError(f"coherence_time must be > 0 ps, got {coherence_time}")
    if bin_width <= 0 or bin_width * COARSE_BIN_FACTOR > coherence_time:
        raise InvalidArgumentError(
            f"bin_width {bin_width} ps is too coarse: the 10x rule requires "
            f"bin_width <= coherence_time / {COARSE_BIN_FACTOR} "
            f"({coherence_time // COARSE_BIN_FACTOR} ps)"
        )
    if duration % bin_width:
        raise InvalidArgumentError(
            f"duration {duration} ps is not a multiple of bin_width {bin_width} ps"
        )
    rng = make_rng(seed)
    n_bins = duration // bin_width
    n_levels = -(-duration // coherence_time)
    levels = rng.exponential(mean_rate, size=n_levels)
    level_index = (np.arange(n_bins, dtype=np.int64) * bin_width) // coherence_time
    logger.debug(
        "Thermal trace: %d bins, %d coherence intervals", n_bins, n_levels
    )
    return IntensityTrace(bin_width=bin_width, values=levels[level_index], duration=duration)


def gen_spdc_pairs(
    pair_rate: float,
    pair_jitter: float,
    duration: int,
    seed: RandomSeed | int,
) -> PairStream:
    """Twin photons from down-conversion: Poisson pair births, Gaussian twin spread."""
    _check_rate(pair_rate, duration, "pair_rate")
    if pair_jitter < 0:
        raise InvalidArgumentError(f"pair_jitter must be >= 0 ps, got {pair_jitter}")
    rng = make_rng(seed)
    herald = _poisson_times(rng, pair_rate, duration)
    if pair_jitter > 0:
        spread = np.rint(rng.normal(0.0, pair_jitter, size=herald.size)).astype(np.int64)
        partner = herald + spread
    else:
        partner = herald.copy()
    return PairStream(herald=herald, partner=partner, duration=duration)


def route_quantum(
    stream: TimeTagStream,
    splitter: SplitterConfig,
    seed: RandomSeed | int,
) -> tuple[TimeTagStream, TimeTagStream]:
    """Send each photon to exactly one of transmitted, reflected, or lost."""
    _check_splitter(splitter)
    draw = make_rng(seed).random(len(stream))
    transmitted = draw < splitter.transmit
    reflected = (draw >= splitter.transmit) & (
        draw < splitter.transmit + splitter.reflect
    )
    return (
        TimeTagStream(
            times=stream.times[transmitted],
            channels=stream.channels[transmitted],
            duration=stream.duration,
        ),
        TimeTagStream(
            times=stream.times[reflected],
            channels=stream.channels[reflected],
            duration=stream.duration,
        ),
    )


def route_classical(
    trace: IntensityTrace, splitter: SplitterConfig
) -> tuple[IntensityTrace, IntensityTrace]:
    """I_B(t) = Tr·I(t) and I_B′(t) = Re·I(t)."""
    _check_splitter(splitter)
    return trace.scaled(splitter.transmit), trace.scaled(splitter.reflect)
