"""Windowed pulse-overlap coincidence counting and accidental-rate estimates.

Two pulses of width τ_p overlap when their start times differ by strictly
less than τ_p, giving an effective window Δt = 2τ_p. Matching is one-to-one:
each tag takes part in at most one coincidence, and each earlier tag claims
the earliest still-free partner inside its window.

Candidate partner ranges are found for every tag at once with
``searchsorted``. Because both range ends are non-decreasing, tags whose
ranges overlap form contiguous clusters; only clusters with more than one
member need the sequential two-pointer pass.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, fields

import numpy as np

from config.models import (
    PS_PER_SECOND,
    AccidentalMethod,
    Channel,
    CoincidenceWindow,
    CountPair,
    Delay,
)
from services.exceptions import InvalidArgumentError
from services.streams import TimeTagStream

logger = logging.getLogger(__name__)

MIN_SHIFT_WINDOWS = 100
"""Delayed-window shifts must exceed the coincidence window by this factor."""


@dataclass(frozen=True)
class CountSummary:
    """Singles, pairwise and three-fold counts over a counting time T."""

    n_a: int
    n_b: int
    n_bprime: int
    n_ab: int
    n_abprime: int
    n_bbprime: int
    n_abbprime: int
    duration: int
    window: int
    pair: CountPair = CountPair.AB

    def __post_init__(self) -> None:
        for item in fields(self):
            if item.name.startswith("n_") and getattr(self, item.name) < 0:
                raise InvalidArgumentError(f"{item.name} must be >= 0")
        if self.n_ab > min(self.n_a, self.n_b):
            raise InvalidArgumentError("n_ab exceeds the singles counts")
        if self.n_abprime > min(self.n_a, self.n_bprime):
            raise InvalidArgumentError("n_abprime exceeds the singles counts")
        if self.n_bbprime > min(self.n_b, self.n_bprime):
            raise InvalidArgumentError("n_bbprime exceeds the singles counts")
        if self.n_abbprime > min(self.n_ab, self.n_abprime):
            raise InvalidArgumentError("n_abbprime exceeds the pairwise counts")
        if self.duration <= 0 or self.window <= 0:
            raise InvalidArgumentError("duration and window must be > 0")

    @property
    def duration_seconds(self) -> float:
        return self.duration / PS_PER_SECOND

    @property
    def window_seconds(self) -> float:
        return self.window / PS_PER_SECOND

    @property
    def window_ns(self) -> float:
        return self.window / 1000

    def singles(self, channel: Channel) -> int:
        return {
            Channel.A: self.n_a,
            Channel.B: self.n_b,
            Channel.BPRIME: self.n_bprime,
        }[channel]

    def coincidences(self, pair: CountPair) -> int:
        return {
            CountPair.AB: self.n_ab,
            CountPair.ABPRIME: self.n_abprime,
            CountPair.BBPRIME: self.n_bbprime,
        }[pair]

    def rate(self, count: int) -> float:
        return count / self.duration_seconds

    @property
    def rates(self) -> dict[str, float]:
        """All counts as Hz, keyed like the published tables (r_a, r_ab, ...)."""
        return {
            "r_" + item.name[2:]: self.rate(getattr(self, item.name))
            for item in fields(self)
            if item.name.startswith("n_")
        }

    @classmethod
    def pooled(cls, summaries: Sequence[CountSummary]) -> CountSummary:
        """Counts and counting times summed over runs that share one window."""
        if not summaries:
            raise InvalidArgumentError("cannot pool an empty list of summaries")
        windows = {summary.window for summary in summaries}
        if len(windows) != 1:
            raise InvalidArgumentError("cannot pool summaries with different windows")
        totals = {
            item.name: sum(getattr(summary, item.name) for summary in summaries)
            for item in fields(cls)
            if item.name.startswith("n_") or item.name == "duration"
        }
        return cls(**totals, window=windows.pop(), pair=summaries[0].pair)


@dataclass(frozen=True)
class AccidentalEstimate:
    """Expected accidental coincidence rates in Hz."""

    rate_2d: float
    rate_3d_paper: float
    rate_3d_composite: float
    rate_3d_pure_triple: float

    def __post_init__(self) -> None:
        for item in fields(self):
            if getattr(self, item.name) < 0:
                raise InvalidArgumentError(f"{item.name} must be >= 0")

    def rate_3d(self, method: AccidentalMethod | str) -> float:
        return {
            AccidentalMethod.PAPER: self.rate_3d_paper,
            AccidentalMethod.COMPOSITE: self.rate_3d_composite,
            AccidentalMethod.PURE_TRIPLE: self.rate_3d_pure_triple,
        }[AccidentalMethod.parse(method)]

    @classmethod
    def from_rates(
        cls,
        r_a: float,
        r_b: float,
        r_bprime: float,
        r_ab: float,
        r_abprime: float,
        window: float,
        pulse_width: float,
        pair_singles: tuple[float, float] | None = None,
    ) -> AccidentalEstimate:
        """Estimates from singles and pairwise rates; `window` and `pulse_width` in seconds."""
        r_x, r_y = pair_singles if pair_singles is not None else (r_a, r_b)
        args = (r_a, r_b, r_bprime, r_ab, r_abprime, window, pulse_width)
        return cls(
            rate_2d=accidental_rate_2d(r_x, r_y, window),
            rate_3d_paper=accidental_rate_3d(*args, AccidentalMethod.PAPER),
            rate_3d_composite=accidental_rate_3d(*args, AccidentalMethod.COMPOSITE),
            rate_3d_pure_triple=accidental_rate_3d(*args, AccidentalMethod.PURE_TRIPLE),
        )

    @classmethod
    def from_summary(cls, summary: CountSummary) -> AccidentalEstimate:
        rates = summary.rates
        x, y = summary.pair.channels
        return cls.from_rates(
            rates["r_a"],
            rates["r_b"],
            rates["r_bprime"],
            rates["r_ab"],
            rates["r_abprime"],
            summary.window_seconds,
            summary.window_seconds / 2,
            pair_singles=(
                summary.rate(summary.singles(x)),
                summary.rate(summary.singles(y)),
            ),
        )


def _times_of(stream: TimeTagStream | np.ndarray | Sequence[int], name: str) -> np.ndarray:
    if isinstance(stream, TimeTagStream):
        return stream.times
    times = np.asarray(stream, dtype=np.int64)
    if times.ndim != 1:
        raise InvalidArgumentError(f"{name} must be one-dimensional")
    if times.size > 1 and np.any(np.diff(times) < 0):
        raise InvalidArgumentError(f"{name} stream is not sorted by time")
    return times


def _candidates(
    x: np.ndarray, y: np.ndarray, pulse_width: int
) -> tuple[np.ndarray, np.ndarray]:
    """Index range [lo, hi) of y strictly inside each x's pulse-overlap window."""
    lo = np.searchsorted(y, x - pulse_width, side="right")
    hi = np.searchsorted(y, x + pulse_width, side="left")
    return lo, hi


def _cluster_starts(*ranges: tuple[np.ndarray, np.ndarray]) -> np.ndarray:
    n = ranges[0][0].size
    starts = np.ones(n, dtype=bool)
    for lo, hi in ranges:
        starts[1:] &= lo[1:] >= hi[:-1]
    return np.flatnonzero(starts)


def _two_pointer(x: Sequence[int], y: Sequence[int], pulse_width: int) -> int:
    """Greedy one-to-one matching of sorted sequences in time order."""
    i = j = matched = 0
    while i < len(x) and j < len(y):
        delta = x[i] - y[j]
        if delta >= pulse_width:
            j += 1
        elif delta <= -pulse_width:
            i += 1
        else:
            matched += 1
            i += 1
            j += 1
    return matched


def count_pair_coincidences(
    x: TimeTagStream | np.ndarray,
    y: TimeTagStream | np.ndarray,
    window: CoincidenceWindow,
    offset: Delay | int = 0,
) -> int:
    """Number of one-to-one pairs with |t_x − (t_y + offset)| < τ_p."""
    xt = _times_of(x, "x")
    yt = _times_of(y, "y") + int(offset)
    if not xt.size or not yt.size:
        return 0
    tau = window.pulse_width
    lo, hi = _candidates(xt, yt, tau)
    starts = _cluster_starts((lo, hi))
    ends = np.append(starts[1:], xt.size)
    singleton = ends - starts == 1
    matched = int(np.count_nonzero(hi[starts[singleton]] > lo[starts[singleton]]))
    for start, end in zip(starts[~singleton].tolist(), ends[~singleton].tolist()):
        matched += _two_pointer(
            xt[start:end].tolist(),
            yt[lo[start] : hi[end - 1]].tolist(),
            tau,
        )
    return matched


def _first_free(lo: int, hi: int, used: set[int]) -> int | None:
    for index in range(lo, hi):
        if index not in used:
            return index
    return None


def count_triple_coincidences(
    a: TimeTagStream | np.ndarray,
    b: TimeTagStream | np.ndarray,
    bprime: TimeTagStream | np.ndarray,
    window: CoincidenceWindow,
    offsets: tuple[Delay | int, Delay | int] = (0, 0),
) -> int:
    """Herald-centred three-folds.

    An A tag counts when a free B tag and a free B′ tag both overlap its
    pulse (|t_B − t_A − offset_B| < τ_p and likewise for B′); the two partners
    are then consumed.
    """
    at = _times_of(a, "a")
    bt = _times_of(b, "b") - int(offsets[0])
    pt = _times_of(bprime, "bprime") - int(offsets[1])
    if not (at.size and bt.size and pt.size):
        return 0
    tau = window.pulse_width
    lo_b, hi_b = _candidates(at, bt, tau)
    lo_p, hi_p = _candidates(at, pt, tau)
    starts = _cluster_starts((lo_b, hi_b), (lo_p, hi_p))
    ends = np.append(starts[1:], at.size)
    singleton = ends - starts == 1
    first = starts[singleton]
    triples = int(
        np.count_nonzero((hi_b[first] > lo_b[first]) & (hi_p[first] > lo_p[first]))
    )
    for start, end in zip(starts[~singleton].tolist(), ends[~singleton].tolist()):
        used_b: set[int] = set()
        used_p: set[int] = set()
        for i in range(start, end):
            jb = _first_free(int(lo_b[i]), int(hi_b[i]), used_b)
            jp = _first_free(int(lo_p[i]), int(hi_p[i]), used_p)
            if jb is not None and jp is not None:
                used_b.add(jb)
                used_p.add(jp)
                triples += 1
    return triples


def accidental_rate_2d(r_a: float, r_b: float, window: float) -> float:
    """Δt·R_A·R_B for independent streams; rates in Hz, window in seconds."""
    if r_a < 0 or r_b < 0 or window < 0:
        raise InvalidArgumentError("rates and window must be >= 0")
    return window * r_a * r_b


def accidental_rate_3d(
    r_a: float,
    r_b: float,
    r_bprime: float,
    r_ab: float,
    r_abprime: float,
    window: float,
    pulse_width: float,
    method: AccidentalMethod | str = AccidentalMethod.COMPOSITE,
) -> float:
    """Three-fold accidental rate in Hz.

    PAPER is Δt·R_A·R_B as printed; PURE_TRIPLE is three uncorrelated singles,
    3τ_p²·R_A·R_B·R_B′; COMPOSITE adds a real twofold meeting a random third
    single, for both pairings, to the pure-triple term.
    """
    method = AccidentalMethod.parse(method)
    if min(r_a, r_b, r_bprime, r_ab, r_abprime, window, pulse_width) < 0:
        raise InvalidArgumentError("rates, window and pulse width must be >= 0")
    pure_triple = 3 * pulse_width**2 * r_a * r_b * r_bprime
    if method is AccidentalMethod.PAPER:
        return window * r_a * r_b
    if method is AccidentalMethod.PURE_TRIPLE:
        return pure_triple
    return window * (r_ab * r_bprime + r_abprime * r_b) + pure_triple


def summarize(
    a: TimeTagStream,
    b: TimeTagStream,
    bprime: TimeTagStream,
    window: CoincidenceWindow,
    offsets: tuple[Delay | int, Delay | int] = (0, 0),
    pair: CountPair = CountPair.AB,
) -> CountSummary:
    """Every count the anti-correlation parameters need, for one counting time."""
    durations = {a.duration, b.duration, bprime.duration}
    if len(durations) != 1:
        raise InvalidArgumentError(
            f"streams must share one duration, got {sorted(durations)} ps"
        )
    off_b, off_bp = int(offsets[0]), int(offsets[1])
    summary = CountSummary(
        n_a=len(a),
        n_b=len(b),
        n_bprime=len(bprime),
        n_ab=count_pair_coincidences(a, b, window, -off_b),
        n_abprime=count_pair_coincidences(a, bprime, window, -off_bp),
        n_bbprime=count_pair_coincidences(b, bprime, window, off_b - off_bp),
        n_abbprime=count_triple_coincidences(a, b, bprime, window, (off_b, off_bp)),
        duration=durations.pop(),
        window=window.window,
        pair=pair,
    )
    logger.debug("Counted %s", summary)
    return summary


def shifted_accidentals(
    x: TimeTagStream,
    y: TimeTagStream,
    window: CoincidenceWindow,
    shift: Delay | int,
) -> int:
    """Pair coincidences with y delayed far outside any true correlation."""
    if abs(int(shift)) < MIN_SHIFT_WINDOWS * window.window:
        raise InvalidArgumentError(
            f"shift {shift} ps must be at least {MIN_SHIFT_WINDOWS} windows "
            f"({MIN_SHIFT_WINDOWS * window.window} ps)"
        )
    return count_pair_coincidences(x, y, window, shift)
