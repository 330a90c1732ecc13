"""Event containers shared by simulation, file I/O, and analysis.

All event times are integer picoseconds held in ``int64`` arrays; channels are
``uint8`` labels following :class:`config.models.Channel`. Containers are
immutable once built: their arrays are flagged read-only.
"""

from __future__ import annotations

from collections.abc import Iterator
from dataclasses import dataclass

import numpy as np

from config.models import PS_PER_SECOND, Channel
from services.exceptions import InvalidArgumentError


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


def _as_times(values, name: str = "times") -> np.ndarray:
    array = np.asarray(values)
    if array.ndim != 1:
        raise InvalidArgumentError(f"{name} must be one-dimensional")
    if array.size and not np.issubdtype(array.dtype, np.integer):
        raise InvalidArgumentError(f"{name} must be integer picoseconds, got {array.dtype}")
    return np.array(array, dtype=np.int64, copy=True)


def first_disorder(times: np.ndarray, channels: np.ndarray) -> int:
    """Index of the first tag breaking (time, channel) order, or -1."""
    if times.size < 2:
        return -1
    dt = np.diff(times)
    dc = np.diff(channels.astype(np.int16))
    bad = np.flatnonzero((dt < 0) | ((dt == 0) & (dc < 0)))
    return int(bad[0]) + 1 if bad.size else -1


@dataclass(frozen=True)
class TimeTag:
    time: int
    channel: Channel

    def __post_init__(self) -> None:
        if self.time < 0:
            raise InvalidArgumentError(f"TimeTag time must be >= 0, got {self.time}")


@dataclass(frozen=True, eq=False)
class TimeTagStream:
    """Sorted, channel-labelled detection timestamps over a counting time T."""

    times: np.ndarray
    channels: np.ndarray
    duration: int

    def __post_init__(self) -> None:
        times = _as_times(self.times)
        channels = np.array(self.channels, dtype=np.uint8, copy=True)
        if channels.shape != times.shape:
            raise InvalidArgumentError("times and channels must have the same length")
        duration = int(self.duration)
        if duration < 0:
            raise InvalidArgumentError(f"duration must be >= 0, got {duration}")
        if times.size:
            if times.min() < 0:
                raise InvalidArgumentError("tag times must be >= 0")
            if times.max() >= duration:
                raise InvalidArgumentError(
                    f"tag time {int(times.max())} ps is not below duration {duration} ps"
                )
            if channels.max() > max(Channel):
                raise InvalidArgumentError(f"unknown channel label {int(channels.max())}")
        bad = first_disorder(times, channels)
        if bad >= 0:
            raise InvalidArgumentError(
                f"tags are not sorted by (time, channel): first offending tag {bad}"
            )
        object.__setattr__(self, "times", _readonly(times))
        object.__setattr__(self, "channels", _readonly(channels))
        object.__setattr__(self, "duration", duration)

    @classmethod
    def from_arrays(
        cls,
        times,
        channels,
        duration: int,
        *,
        sort: bool = False,
    ) -> TimeTagStream:
        """Build a stream; with ``sort=True`` unsorted input is ordered instead of rejected."""
        times = _as_times(times)
        if isinstance(channels, (int, np.integer)):
            channels = np.full(times.size, int(channels), dtype=np.uint8)
        else:
            channels = np.asarray(channels, dtype=np.uint8)
        if sort and first_disorder(times, channels) >= 0:
            order = np.lexsort((channels, times))
            times, channels = times[order], channels[order]
        return cls(times=times, channels=channels, duration=duration)

    @classmethod
    def single(
        cls, times, channel: Channel, duration: int, *, sort: bool = False
    ) -> TimeTagStream:
        return cls.from_arrays(times, int(channel), duration, sort=sort)

    @classmethod
    def empty(cls, duration: int) -> TimeTagStream:
        return cls(
            times=np.empty(0, dtype=np.int64),
            channels=np.empty(0, dtype=np.uint8),
            duration=duration,
        )

    @classmethod
    def merge(cls, *streams: TimeTagStream) -> TimeTagStream:
        """Merge streams sharing one duration into a single (time, channel)-ordered stream."""
        if not streams:
            raise InvalidArgumentError("merge needs at least one stream")
        durations = {stream.duration for stream in streams}
        if len(durations) != 1:
            raise InvalidArgumentError(
                f"cannot merge streams of different durations: {sorted(durations)}"
            )
        times = np.concatenate([stream.times for stream in streams])
        channels = np.concatenate([stream.channels for stream in streams])
        order = np.lexsort((channels, times))
        return cls(times=times[order], channels=channels[order], duration=durations.pop())

    def __len__(self) -> int:
        return int(self.times.size)

    def __iter__(self) -> Iterator[TimeTag]:
        for time, channel in zip(self.times.tolist(), self.channels.tolist()):
            yield TimeTag(time=time, channel=Channel(channel))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TimeTagStream):
            return NotImplemented
        return (
            self.duration == other.duration
            and np.array_equal(self.times, other.times)
            and np.array_equal(self.channels, other.channels)
        )

    __hash__ = None

    def __repr__(self) -> str:
        return f"TimeTagStream(n={len(self)}, duration={self.duration} ps)"

    @property
    def channel(self) -> Channel | None:
        """The single channel all tags carry, or None for empty or mixed streams."""
        if not self.channels.size:
            return None
        first = int(self.channels[0])
        if np.all(self.channels == first):
            return Channel(first)
        return None

    @property
    def duration_seconds(self) -> float:
        return self.duration / PS_PER_SECOND

    @property
    def rate(self) -> float:
        """Mean count rate in Hz."""
        if self.duration == 0:
            return 0.0
        return len(self) / self.duration_seconds

    def count(self, channel: Channel) -> int:
        return int(np.count_nonzero(self.channels == int(channel)))

    def select(self, channel: Channel) -> TimeTagStream:
        mask = self.channels == int(channel)
        return TimeTagStream(
            times=self.times[mask], channels=self.channels[mask], duration=self.duration
        )

    def relabel(self, channel: Channel) -> TimeTagStream:
        """All tags moved onto `channel`; ties may reorder so the result is re-sorted."""
        return TimeTagStream.from_arrays(self.times, int(channel), self.duration, sort=True)

    def split_channels(self) -> dict[Channel, TimeTagStream]:
        return {channel: self.select(channel) for channel in Channel}


@dataclass(frozen=True, eq=False)
class IntensityTrace:
    """Piecewise-constant classical intensity I(t).

    Values carry units of counts per second at unit detector efficiency, so
    ``efficiency * value`` is directly a detection rate.
    """

    bin_width: int
    values: np.ndarray
    duration: int

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 1:
            raise InvalidArgumentError("intensity values must be one-dimensional")
        if self.bin_width <= 0:
            raise InvalidArgumentError(f"bin_width must be > 0, got {self.bin_width}")
        if values.size and (not np.all(np.isfinite(values)) or values.min() < 0):
            raise InvalidArgumentError("intensity values must be finite and >= 0")
        if int(self.bin_width) * values.size != int(self.duration):
            raise InvalidArgumentError(
                f"bin_width x {values.size} bins != duration {self.duration} ps"
            )
        object.__setattr__(self, "bin_width", int(self.bin_width))
        object.__setattr__(self, "duration", int(self.duration))
        object.__setattr__(self, "values", _readonly(values))

    @classmethod
    def constant(cls, rate: float, bin_width: int, duration: int) -> IntensityTrace:
        if duration % bin_width:
            raise InvalidArgumentError(
                f"duration {duration} ps is not a multiple of bin_width {bin_width} ps"
            )
        return cls(
            bin_width=bin_width,
            values=np.full(duration // bin_width, float(rate)),
            duration=duration,
        )

    def __len__(self) -> int:
        return int(self.values.size)

    def scaled(self, factor: float) -> IntensityTrace:
        return IntensityTrace(
            bin_width=self.bin_width, values=self.values * factor, duration=self.duration
        )

    @property
    def mean(self) -> float:
        return float(self.values.mean()) if self.values.size else 0.0

    @property
    def intensity_ratio(self) -> float:
        """⟨I²⟩/⟨I⟩²: 1 for stable light, 2 for thermal light."""
        mean = self.mean
        if mean == 0:
            raise InvalidArgumentError("intensity ratio undefined for a dark trace")
        return float(np.mean(self.values**2) / mean**2)


@dataclass(frozen=True, eq=False)
class PairStream:
    """Down-converted twin photons: herald (arm A) and partner (arm B) times."""

    herald: np.ndarray
    partner: np.ndarray
    duration: int

    def __post_init__(self) -> None:
        herald = _as_times(self.herald, "herald")
        partner = _as_times(self.partner, "partner")
        if herald.shape != partner.shape:
            raise InvalidArgumentError("herald and partner must have the same length")
        if herald.size > 1 and np.any(np.diff(herald) < 0):
            raise InvalidArgumentError("herald times must be sorted")
        object.__setattr__(self, "herald", _readonly(herald))
        object.__setattr__(self, "partner", _readonly(partner))
        object.__setattr__(self, "duration", int(self.duration))

    def __len__(self) -> int:
        return int(self.herald.size)

    def _to_stream(
        self, times: np.ndarray, channel: Channel, offset: int, duration: int | None
    ) -> TimeTagStream:
        duration = self.duration if duration is None else duration
        shifted = times + offset
        shifted = shifted[(shifted >= 0) & (shifted < duration)]
        return TimeTagStream.single(np.sort(shifted), channel, duration)

    def heralds(
        self, channel: Channel = Channel.A, *, offset: int = 0, duration: int | None = None
    ) -> TimeTagStream:
        return self._to_stream(self.herald, channel, offset, duration)

    def partners(
        self, channel: Channel = Channel.B, *, offset: int = 0, duration: int | None = None
    ) -> TimeTagStream:
        """Partner photons as a sorted stream; jitter pushed outside [0, duration) is dropped."""
        return self._to_stream(self.partner, channel, offset, duration)
