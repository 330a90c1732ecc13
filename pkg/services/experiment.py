from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from typing import Protocol

from config.models import (
    Channel,
    ExperimentConfig,
    Mode,
    RandomSeed,
    Regime,
    SourceKind,
)
from services.coincidence import CountSummary, summarize
from services.detection import apply_imperfections, sample_intensity, thin
from services.exceptions import ConfigError
from services.sources import (
    gen_coherent_tags,
    gen_spdc_pairs,
    gen_thermal_trace,
    route_classical,
    route_quantum,
)
from services.streams import IntensityTrace, TimeTagStream
from utils.helpers import derive_seed, make_rng

logger = logging.getLogger(__name__)

# Seed-tree branches below a run seed.
_SOURCE, _ROUTE, _DETECT, _IMPERFECTIONS = range(4)

RunStreams = dict[Channel, TimeTagStream]


class ExperimentPipeline(Protocol):
    def simulate(self, seed: RandomSeed | int) -> RunStreams:
        """Detector output of every channel for one run."""


def run_chunks(run_duration: int, chunk_duration: int) -> list[tuple[int, int]]:
    """(start, length) pieces covering [0, run_duration) in order."""
    chunk_duration = max(1, min(chunk_duration, run_duration))
    return [
        (start, min(chunk_duration, run_duration - start))
        for start in range(0, run_duration, chunk_duration)
    ]


class _ChunkedPipeline(ABC):
    """Simulate a run chunk by chunk, then apply detector imperfections per channel.

    Chunks keep memory bounded; jitter, dark counts and dead time act on the
    assembled run so they are continuous across chunk boundaries.
    """

    def __init__(self, config: ExperimentConfig):
        self.config = config

    @abstractmethod
    def _simulate_chunk(
        self, seed: RandomSeed | int, index: int, start: int, length: int
    ) -> dict[Channel, TimeTagStream]:
        """Detected, not yet imperfect, tags of one chunk placed at `start`."""

    def _thinning_rng(self, seed: RandomSeed | int, index: int, channel: Channel):
        return make_rng(derive_seed(seed, _DETECT, index, int(channel)))

    def simulate(self, seed: RandomSeed | int) -> RunStreams:
        config = self.config
        parts: dict[Channel, list[TimeTagStream]] = {channel: [] for channel in Channel}
        chunks = run_chunks(config.run_duration, config.chunk_duration)
        for index, (start, length) in enumerate(chunks):
            for channel, stream in self._simulate_chunk(seed, index, start, length).items():
                parts[channel].append(stream)
            logger.debug("Chunk %d/%d simulated", index + 1, len(chunks))

        streams: RunStreams = {}
        for channel in Channel:
            if not parts[channel]:
                streams[channel] = TimeTagStream.empty(config.run_duration)
                continue
            streams[channel] = apply_imperfections(
                TimeTagStream.merge(*parts[channel]),
                config.detector(channel),
                make_rng(derive_seed(seed, _IMPERFECTIONS, int(channel))),
                channel,
            )
        return streams


class QuantumPipeline(_ChunkedPipeline):
    """Photon-level simulation: twin pairs or coherent photons through the splitter."""

    def _simulate_chunk(
        self, seed: RandomSeed | int, index: int, start: int, length: int
    ) -> dict[Channel, TimeTagStream]:
        config = self.config
        source = config.source
        total = config.run_duration
        source_seed = derive_seed(seed, _SOURCE, index)
        photons: dict[Channel, TimeTagStream] = {}

        if source.kind is SourceKind.SPDC_PAIRS:
            pairs = gen_spdc_pairs(source.mean_rate, source.pair_jitter, length, source_seed)
            photons[Channel.A] = pairs.heralds(Channel.A, offset=start, duration=total)
            beam = pairs.partners(Channel.B, offset=start, duration=total)
        else:
            local = gen_coherent_tags(source.mean_rate, length, source_seed, Channel.B)
            beam = TimeTagStream.single(local.times + start, Channel.B, total)

        if config.mode is Mode.TWO_DETECTOR and source.kind is SourceKind.SPDC_PAIRS:
            photons[Channel.B] = beam
        else:
            photons[Channel.B], photons[Channel.BPRIME] = route_quantum(
                beam, config.splitter, derive_seed(seed, _ROUTE, index)
            )

        return {
            channel: thin(
                stream,
                config.detector(channel).efficiency,
                self._thinning_rng(seed, index, channel),
            )
            for channel, stream in photons.items()
        }


class SemiClassicalPipeline(_ChunkedPipeline):
    """Classical intensity split at the PBS and detected with probability η·I(t)·Δt.

    Thermal light is sampled bin by bin from its intensity trace. A constant
    intensity makes the photocounts a homogeneous Poisson process at η·I, so
    coherent chunks are drawn directly without bins.
    """

    def _thermal_trace(self, seed: RandomSeed | int, index: int, length: int) -> IntensityTrace:
        source = self.config.source
        return gen_thermal_trace(
            source.mean_rate,
            source.coherence_time,
            source.bin_width,
            length,
            derive_seed(seed, _SOURCE, index),
        )

    def _coherent_chunk(
        self, seed: RandomSeed | int, index: int, start: int, length: int
    ) -> dict[Channel, TimeTagStream]:
        config = self.config
        total = config.run_duration
        tags: dict[Channel, TimeTagStream] = {}
        for channel, fraction in (
            (Channel.B, config.splitter.transmit),
            (Channel.BPRIME, config.splitter.reflect),
        ):
            rate = config.source.mean_rate * fraction * config.detector(channel).efficiency
            if rate <= 0:
                tags[channel] = TimeTagStream.empty(total)
                continue
            local = gen_coherent_tags(
                rate, length, derive_seed(seed, _DETECT, index, int(channel)), channel
            )
            tags[channel] = TimeTagStream.single(local.times + start, channel, total)
        return tags

    def _simulate_chunk(
        self, seed: RandomSeed | int, index: int, start: int, length: int
    ) -> dict[Channel, TimeTagStream]:
        config = self.config
        if config.source.kind is not SourceKind.THERMAL:
            return self._coherent_chunk(seed, index, start, length)
        transmitted, reflected = route_classical(
            self._thermal_trace(seed, index, length), config.splitter
        )
        return {
            channel: sample_intensity(
                trace,
                config.detector(channel).efficiency,
                self._thinning_rng(seed, index, channel),
                channel,
                offset=start,
                duration=config.run_duration,
            )
            for channel, trace in ((Channel.B, transmitted), (Channel.BPRIME, reflected))
        }


def build_pipeline(config: ExperimentConfig) -> ExperimentPipeline:
    """Build the simulation pipeline for the configured regime and source."""
    kind = config.source.kind
    if config.regime is Regime.QUANTUM:
        if kind is SourceKind.THERMAL:
            raise ConfigError("thermal light is simulated in the semiclassical regime only")
        if config.mode is Mode.THREE_DETECTOR and kind is not SourceKind.SPDC_PAIRS:
            raise ConfigError("three-detector runs need the spdc_pairs source")
        return QuantumPipeline(config)

    if kind is SourceKind.SPDC_PAIRS:
        raise ConfigError("spdc_pairs light is simulated in the quantum regime only")
    if config.mode is Mode.THREE_DETECTOR:
        raise ConfigError("three-detector runs need the quantum regime")
    return SemiClassicalPipeline(config)


def simulate_run(config: ExperimentConfig, seed: RandomSeed | int) -> RunStreams:
    return build_pipeline(config).simulate(seed)


def simulate_and_count(
    config: ExperimentConfig, seed: RandomSeed | int
) -> tuple[RunStreams, CountSummary]:
    streams = simulate_run(config, seed)
    summary = summarize(
        streams[Channel.A],
        streams[Channel.B],
        streams[Channel.BPRIME],
        config.window,
        config.offset_pair,
        pair=config.pair,
    )
    return streams, summary
