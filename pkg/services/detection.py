from __future__ import annotations

import logging

import numpy as np

from config.models import Channel, DetectorConfig, RandomSeed
from services.exceptions import InvalidArgumentError
from services.streams import IntensityTrace, TimeTagStream
from utils.helpers import make_rng, ps_to_seconds

logger = logging.getLogger(__name__)

MAX_BIN_PROBABILITY = 0.1
"""Upper limit of η·I·Δt per bin for the linear photodetection regime."""


def _check_detector(config: DetectorConfig) -> None:
    problems = config.problems()
    if problems:
        raise InvalidArgumentError("; ".join(problems))


def _label_for(stream: TimeTagStream, channel: Channel | None) -> Channel:
    if channel is not None:
        return channel
    return stream.channel if stream.channel is not None else Channel.A


def apply_dead_time(tags: TimeTagStream, dead_time: int) -> TimeTagStream:
    """Non-paralyzable dead time: keep a tag iff it is >= dead_time after the last kept tag."""
    if dead_time < 0:
        raise InvalidArgumentError(f"dead_time must be >= 0 ps, got {dead_time}")
    if dead_time == 0 or len(tags) < 2:
        return tags
    times = tags.times
    close = np.flatnonzero(np.diff(times) < dead_time) + 1
    if not close.size:
        return tags
    # A tag whose predecessor is more than dead_time away is always kept, so
    # only tags inside bursts need the sequential greedy pass.
    keep = np.ones(times.size, dtype=bool)
    times_list = times.tolist()
    last_kept = 0
    previous = -2
    for index in close.tolist():
        if index - 1 != previous:
            last_kept = times_list[index - 1]
        if times_list[index] - last_kept >= dead_time:
            last_kept = times_list[index]
        else:
            keep[index] = False
        previous = index
    logger.debug("Dead time removed %d of %d tags", int((~keep).sum()), times.size)
    return TimeTagStream(
        times=times[keep], channels=tags.channels[keep], duration=tags.duration
    )


def thin(
    photons: TimeTagStream, efficiency: float, rng: np.random.Generator
) -> TimeTagStream:
    """Independent survival of each photon with probability `efficiency`."""
    survive = rng.random(len(photons)) < efficiency
    return TimeTagStream(
        times=photons.times[survive],
        channels=photons.channels[survive],
        duration=photons.duration,
    )


def sample_intensity(
    trace: IntensityTrace,
    efficiency: float,
    rng: np.random.Generator,
    channel: Channel = Channel.B,
    *,
    offset: int = 0,
    duration: int | None = None,
) -> TimeTagStream:
    """Inhomogeneous Poisson photocounts from a classical intensity.

    Each bin yields Poisson(η·I·Δt) counts placed uniformly inside the bin.
    `offset` places the trace inside a longer stream of length `duration`.
    """
    probability = efficiency * trace.values * ps_to_seconds(trace.bin_width)
    if probability.size:
        worst = int(np.argmax(probability))
        if probability[worst] >= MAX_BIN_PROBABILITY:
            raise InvalidArgumentError(
                f"bin {worst} (t = {offset + worst * trace.bin_width} ps) has detection "
                f"probability {probability[worst]:.3g} >= {MAX_BIN_PROBABILITY}; "
                f"reduce bin_width to stay in the linear regime"
            )
    counts = rng.poisson(probability)
    bins = np.repeat(np.arange(counts.size, dtype=np.int64), counts)
    times = bins * trace.bin_width + rng.integers(
        0, trace.bin_width, size=bins.size, dtype=np.int64
    )
    times.sort()
    return TimeTagStream.single(
        times + offset, channel, trace.duration if duration is None else duration
    )


def apply_imperfections(
    stream: TimeTagStream,
    config: DetectorConfig,
    rng: np.random.Generator,
    channel: Channel | None = None,
) -> TimeTagStream:
    """Timing jitter, dark counts, then dead time, in that order."""
    label = _label_for(stream, channel)
    times = stream.times
    if config.jitter > 0 and times.size:
        times = times + np.rint(rng.normal(0.0, config.jitter, size=times.size)).astype(
            np.int64
        )
        times = times[(times >= 0) & (times < stream.duration)]
    if config.dark_rate > 0 and stream.duration > 0:
        n_dark = rng.poisson(config.dark_rate * stream.duration_seconds)
        dark = rng.integers(0, stream.duration, size=n_dark, dtype=np.int64)
        times = np.concatenate([times, dark])
    if times is not stream.times or channel is not None:
        stream = TimeTagStream.single(np.sort(times), label, stream.duration)
    return apply_dead_time(stream, config.dead_time)


def detect_photons(
    photons: TimeTagStream,
    config: DetectorConfig,
    seed: RandomSeed | int,
    channel: Channel | None = None,
) -> TimeTagStream:
    """Detector output for a photon stream: thinning by η plus imperfections."""
    _check_detector(config)
    rng = make_rng(seed)
    return apply_imperfections(thin(photons, config.efficiency, rng), config, rng, channel)


def detect_intensity(
    trace: IntensityTrace,
    config: DetectorConfig,
    seed: RandomSeed | int,
    channel: Channel = Channel.B,
) -> TimeTagStream:
    """Semi-classical photodetection: photocount probability η·I(t)·Δt."""
    _check_detector(config)
    rng = make_rng(seed)
    counts = sample_intensity(trace, config.efficiency, rng, channel)
    return apply_imperfections(counts, config, rng, channel)
