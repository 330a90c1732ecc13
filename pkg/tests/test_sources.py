import numpy as np
import pytest
from scipy import stats

from config.models import PS_PER_SECOND, Channel, SplitterConfig
from services.exceptions import InvalidArgumentError
from services.sources import (
    gen_coherent_tags,
    gen_spdc_pairs,
    gen_thermal_trace,
    route_classical,
    route_quantum,
)
from services.streams import IntensityTrace, TimeTagStream


def test_coherent_count_matches_poisson_mean() -> None:
    stream = gen_coherent_tags(14_800, 30 * PS_PER_SECOND, seed=1)

    assert abs(len(stream) - 444_000) < 5 * np.sqrt(444_000)
    assert stream.channel is Channel.A


def test_coherent_gaps_are_exponential() -> None:
    stream = gen_coherent_tags(10_000, 10 * PS_PER_SECOND, seed=2)
    gaps = np.diff(stream.times) / PS_PER_SECOND

    result = stats.kstest(gaps, "expon", args=(0, 1 / 10_000))

    assert result.pvalue > 1e-3


def test_coherent_counts_have_unit_fano_factor() -> None:
    stream = gen_coherent_tags(20_000, 5 * PS_PER_SECOND, seed=3)
    counts = np.bincount(stream.times // 10**9, minlength=5000)

    fano = counts.var() / counts.mean()

    assert fano == pytest.approx(1.0, abs=0.1)


def test_same_seed_gives_identical_streams() -> None:
    first = gen_coherent_tags(5_000, PS_PER_SECOND, seed=42)
    second = gen_coherent_tags(5_000, PS_PER_SECOND, seed=42)

    assert first == second
    assert first != gen_coherent_tags(5_000, PS_PER_SECOND, seed=43)


def test_sources_reject_non_positive_rates() -> None:
    with pytest.raises(InvalidArgumentError):
        gen_coherent_tags(0, PS_PER_SECOND, seed=1)
    with pytest.raises(InvalidArgumentError):
        gen_spdc_pairs(-1, 0, PS_PER_SECOND, seed=1)
    with pytest.raises(InvalidArgumentError):
        gen_coherent_tags(10, 0, seed=1)


def test_thermal_trace_has_exponential_statistics() -> None:
    trace = gen_thermal_trace(
        mean_rate=1000.0,
        coherence_time=1_000,
        bin_width=100,
        duration=200_000_000,
        seed=5,
    )
    levels = trace.values[::10]

    assert trace.intensity_ratio == pytest.approx(2.0, abs=0.05)
    assert abs(levels.mean() - 1000.0) < 5 * 1000.0 / np.sqrt(levels.size)
    assert stats.kstest(levels, "expon", args=(0, 1000.0)).pvalue > 1e-3


def test_thermal_trace_holds_one_level_per_coherence_time() -> None:
    trace = gen_thermal_trace(500.0, 10**9, 10**6, 10**8, seed=6)

    assert np.unique(trace.values).size == 1


def test_thermal_trace_rejects_coarse_bins() -> None:
    with pytest.raises(InvalidArgumentError, match="10x rule"):
        gen_thermal_trace(1000.0, 1_000, 200, 10_000, seed=1)


def test_spdc_pairs_without_jitter_are_simultaneous() -> None:
    pairs = gen_spdc_pairs(370_000, 0, PS_PER_SECOND, seed=7)

    assert np.array_equal(pairs.herald, pairs.partner)
    assert abs(len(pairs) - 370_000) < 5 * np.sqrt(370_000)


def test_spdc_pair_jitter_is_gaussian() -> None:
    pairs = gen_spdc_pairs(50_000, 200.0, PS_PER_SECOND, seed=8)
    spread = (pairs.partner - pairs.herald).astype(float)

    assert spread.std() == pytest.approx(200.0, rel=0.03)
    assert abs(spread.mean()) < 5 * 200.0 / np.sqrt(spread.size)


def test_full_transmission_routes_everything_to_one_port() -> None:
    stream = gen_coherent_tags(1_000, PS_PER_SECOND, seed=9, channel=Channel.B)

    transmitted, reflected = route_quantum(stream, SplitterConfig(1.0, 0.0), seed=10)

    assert transmitted == stream
    assert len(reflected) == 0


def test_quantum_routing_is_exclusive_and_balanced() -> None:
    times = np.arange(1_000_000, dtype=np.int64)
    stream = TimeTagStream.single(times, Channel.B, 1_000_000)

    transmitted, reflected = route_quantum(stream, SplitterConfig(0.5, 0.5), seed=11)

    assert abs(len(transmitted) - 500_000) < 5 * 500
    assert len(transmitted) + len(reflected) == 1_000_000
    assert np.intersect1d(transmitted.times, reflected.times).size == 0


def test_lossy_splitter_fractions() -> None:
    n = 200_000
    stream = TimeTagStream.single(np.arange(n, dtype=np.int64), Channel.B, n)

    transmitted, reflected = route_quantum(stream, SplitterConfig(0.3, 0.6), seed=12)

    lost = n - len(transmitted) - len(reflected)
    for count, p in ((len(transmitted), 0.3), (len(reflected), 0.6), (lost, 0.1)):
        assert abs(count - n * p) < 5 * np.sqrt(n * p * (1 - p))


def test_classical_routing_scales_intensity() -> None:
    trace = IntensityTrace(bin_width=5, values=np.array([2.0, 4.0]), duration=10)

    transmitted, reflected = route_classical(trace, SplitterConfig(0.5, 0.5))

    assert transmitted.values.tolist() == [1.0, 2.0]
    assert reflected.values.tolist() == [1.0, 2.0]
    dark, _ = route_classical(trace, SplitterConfig(0.0, 1.0))
    assert dark.values.tolist() == [0.0, 0.0]


def test_splitter_coefficients_must_not_exceed_one() -> None:
    trace = IntensityTrace.constant(1.0, 1, 4)

    with pytest.raises(InvalidArgumentError):
        route_classical(trace, SplitterConfig(0.8, 0.4))
