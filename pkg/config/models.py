from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from typing import NewType

from services.exceptions import InvalidArgumentError

PS_PER_SECOND = 1_000_000_000_000

Delay = NewType("Delay", int)
"""Signed relative shift between channels, in integer picoseconds."""

RandomSeed = NewType("RandomSeed", int)
"""64-bit unsigned seed; identical seed and config give identical streams."""


class Channel(IntEnum):
    """Detector channels of the three-detector apparatus, in tie-break order."""

    A = 0
    B = 1
    BPRIME = 2

    @property
    def key(self) -> str:
        return self.name.lower()


class SourceKind(str, Enum):
    COHERENT = "coherent"
    THERMAL = "thermal"
    SPDC_PAIRS = "spdc_pairs"


class Mode(str, Enum):
    TWO_DETECTOR = "2d"
    THREE_DETECTOR = "3d"


class Regime(str, Enum):
    SEMI_CLASSICAL = "semiclassical"
    QUANTUM = "quantum"


class AccidentalMethod(str, Enum):
    PAPER = "paper"
    COMPOSITE = "composite"
    PURE_TRIPLE = "puretriple"

    @classmethod
    def parse(cls, value: str | AccidentalMethod) -> AccidentalMethod:
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise InvalidArgumentError(
                f"Unknown accidental method: {value!r} "
                f"(expected one of {', '.join(m.value for m in cls)})"
            ) from None


class CountPair(str, Enum):
    """Channel pair an α²ᵈ estimate is formed from."""

    AB = "ab"
    ABPRIME = "abprime"
    BBPRIME = "bbprime"

    @property
    def channels(self) -> tuple[Channel, Channel]:
        return {
            CountPair.AB: (Channel.A, Channel.B),
            CountPair.ABPRIME: (Channel.A, Channel.BPRIME),
            CountPair.BBPRIME: (Channel.B, Channel.BPRIME),
        }[self]


@dataclass(frozen=True)
class CoincidenceWindow:
    """Pulse-overlap coincidence window: pulses of width τ_p overlap within Δt = 2τ_p."""

    pulse_width: int

    def __post_init__(self) -> None:
        if int(self.pulse_width) != self.pulse_width or self.pulse_width <= 0:
            raise InvalidArgumentError(
                f"pulse_width must be a positive integer of picoseconds, got {self.pulse_width!r}"
            )

    @property
    def window(self) -> int:
        return 2 * self.pulse_width

    @property
    def window_seconds(self) -> float:
        return self.window / PS_PER_SECOND

    @property
    def pulse_width_seconds(self) -> float:
        return self.pulse_width / PS_PER_SECOND

    @property
    def window_ns(self) -> float:
        return self.window / 1000

    @classmethod
    def from_window_ns(cls, window_ns: float) -> CoincidenceWindow:
        window_ps = round(window_ns * 1000)
        if window_ps <= 0 or window_ps % 2:
            raise InvalidArgumentError(
                f"Window {window_ns} ns must be a positive even number of picoseconds"
            )
        return cls(pulse_width=window_ps // 2)


@dataclass(frozen=True)
class SourceConfig:
    kind: SourceKind = SourceKind.SPDC_PAIRS
    mean_rate: float = 370_000.0
    coherence_time: int = 1_000_000
    pair_jitter: float = 0.0
    duration: int = 30 * PS_PER_SECOND
    bin_width: int = 100_000

    def problems(self, prefix: str = "source") -> list[str]:
        errors: list[str] = []
        if not self.mean_rate > 0:
            errors.append(f"{prefix}.mean_rate must be > 0")
        if self.duration <= 0:
            errors.append(f"{prefix}.duration must be > 0")
        if self.kind is SourceKind.THERMAL and self.coherence_time <= 0:
            errors.append(f"{prefix}.coherence_time_ps must be > 0 for thermal light")
        if self.kind is SourceKind.SPDC_PAIRS and self.pair_jitter < 0:
            errors.append(f"{prefix}.pair_jitter_ps must be >= 0")
        if self.bin_width <= 0:
            errors.append(f"{prefix}.bin_width_ps must be > 0")
        return errors


@dataclass(frozen=True)
class SplitterConfig:
    transmit: float = 0.5
    reflect: float = 0.5

    def problems(self, prefix: str = "splitter") -> list[str]:
        errors: list[str] = []
        if not 0.0 <= self.transmit <= 1.0:
            errors.append(f"{prefix}.transmit must be in [0, 1]")
        if not 0.0 <= self.reflect <= 1.0:
            errors.append(f"{prefix}.reflect must be in [0, 1]")
        # Float sums like 0.7 + 0.3 land a hair above 1.
        if self.transmit + self.reflect > 1.0 + 1e-12:
            errors.append(f"{prefix}.transmit + {prefix}.reflect must be <= 1")
        return errors

    @property
    def loss(self) -> float:
        return max(0.0, 1.0 - self.transmit - self.reflect)


@dataclass(frozen=True)
class DetectorConfig:
    efficiency: float = 0.04
    dark_rate: float = 0.0
    dead_time: int = 50_000
    pulse_width: int = 5_000
    jitter: float = 0.0

    def problems(self, prefix: str = "detector") -> list[str]:
        errors: list[str] = []
        if not 0.0 <= self.efficiency <= 1.0:
            errors.append(f"{prefix}.efficiency must be in [0, 1]")
        if self.dark_rate < 0:
            errors.append(f"{prefix}.dark_rate must be >= 0")
        if self.dead_time < 0:
            errors.append(f"{prefix}.dead_time_ps must be >= 0")
        if self.pulse_width <= 0:
            errors.append(f"{prefix}.pulse_width_ps must be > 0")
        if self.jitter < 0:
            errors.append(f"{prefix}.jitter_ps must be >= 0")
        return errors


def _default_detectors() -> dict[Channel, DetectorConfig]:
    return {channel: DetectorConfig() for channel in Channel}


def _default_offsets() -> dict[Channel, int]:
    return {Channel.B: 0, Channel.BPRIME: 0}


@dataclass(frozen=True)
class ExperimentConfig:
    """Full apparatus plus ensemble settings; defaults describe the heralded three-detector setup."""

    source: SourceConfig = field(default_factory=SourceConfig)
    splitter: SplitterConfig = field(default_factory=SplitterConfig)
    detectors: dict[Channel, DetectorConfig] = field(
        default_factory=_default_detectors
    )
    window: CoincidenceWindow = field(
        default_factory=lambda: CoincidenceWindow(pulse_width=5_000)
    )
    offsets: dict[Channel, int] = field(default_factory=_default_offsets)
    n_runs: int = 20
    run_duration: int = 30 * PS_PER_SECOND
    seed: int = 2718281828
    mode: Mode = Mode.THREE_DETECTOR
    regime: Regime = Regime.QUANTUM
    workers: int = 2
    chunk_duration: int = PS_PER_SECOND
    accidental_method: AccidentalMethod = AccidentalMethod.COMPOSITE
    log_file: str = "logs/photocorr.log"
    log_level: str = "INFO"

    @property
    def pair(self) -> CountPair:
        """Channel pair α²ᵈ is taken over for this apparatus."""
        if self.regime is Regime.QUANTUM and self.source.kind is SourceKind.SPDC_PAIRS:
            return CountPair.AB
        return CountPair.BBPRIME

    @property
    def offset_pair(self) -> tuple[int, int]:
        return (
            self.offsets.get(Channel.B, 0),
            self.offsets.get(Channel.BPRIME, 0),
        )

    def detector(self, channel: Channel) -> DetectorConfig:
        return self.detectors.get(channel, DetectorConfig())

    def with_pulse_width(self, pulse_width: int) -> ExperimentConfig:
        return replace(self, window=CoincidenceWindow(pulse_width=pulse_width))

    def with_rate(self, mean_rate: float) -> ExperimentConfig:
        return replace(self, source=replace(self.source, mean_rate=mean_rate))

    def with_seed(self, seed: int) -> ExperimentConfig:
        return replace(self, seed=seed)
