from dataclasses import replace
from pathlib import Path

import pytest

from config import SEED_ENV_VAR, config_warnings, load_config, validate_config
from config.models import (
    PS_PER_SECOND,
    AccidentalMethod,
    Channel,
    CoincidenceWindow,
    CountPair,
    ExperimentConfig,
    Mode,
    Regime,
    SourceConfig,
    SourceKind,
)
from services.exceptions import ConfigError

ROOT = Path(__file__).resolve().parent.parent


@pytest.fixture(autouse=True)
def no_seed_env(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.delenv(SEED_ENV_VAR, raising=False)


def write(tmp_path: Path, text: str) -> str:
    path = tmp_path / "experiment.ini"
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_defaults_describe_the_heralded_experiment() -> None:
    config = load_config()

    assert config == ExperimentConfig()
    assert config.mode is Mode.THREE_DETECTOR
    assert config.regime is Regime.QUANTUM
    assert config.window.window == 10_000
    assert config.pair is CountPair.AB
    assert config.run_duration == 30 * PS_PER_SECOND


def test_shipped_config_matches_defaults() -> None:
    assert load_config(str(ROOT / "experiment.ini")) == ExperimentConfig()


def test_presets_load() -> None:
    coherent = load_config(str(ROOT / "presets" / "coherent_2d.ini"))
    thermal = load_config(str(ROOT / "presets" / "thermal_2d.ini"))

    assert coherent.source.kind is SourceKind.COHERENT
    assert coherent.pair is CountPair.BBPRIME
    assert thermal.source.kind is SourceKind.THERMAL
    assert thermal.window.pulse_width == 50_000
    assert thermal.chunk_duration == PS_PER_SECOND // 4
    assert config_warnings(thermal) == []


def test_sections_and_dotted_keys_are_equivalent(tmp_path: Path) -> None:
    sectioned = write(
        tmp_path,
        "[detectors.b]\nefficiency = 0.2\ndark_rate = 150\n"
        "[experiment]\nn_runs = 5\nrun_duration_s = 2.5\n",
    )
    first = load_config(sectioned)
    dotted = tmp_path / "dotted.ini"
    dotted.write_text(
        "detectors.b.efficiency = 0.2\ndetectors.b.dark_rate = 150\n"
        "experiment.n_runs = 5\nexperiment.run_duration_s = 2.5\n",
        encoding="utf-8",
    )

    second = load_config(str(dotted))

    assert first == second
    assert first.detector(Channel.B).efficiency == 0.2
    assert first.detector(Channel.A).efficiency == 0.04
    assert first.run_duration == 2_500_000_000_000


def test_unknown_key_is_named(tmp_path: Path) -> None:
    with pytest.raises(ConfigError, match="source.colour"):
        load_config(write(tmp_path, "[source]\ncolour = red\n"))


def test_bad_value_is_named(tmp_path: Path) -> None:
    with pytest.raises(ConfigError, match="experiment.n_runs"):
        load_config(write(tmp_path, "experiment.n_runs = many\n"))
    with pytest.raises(ConfigError, match="experiment.mode"):
        load_config(write(tmp_path, "experiment.mode = 4d\n"))
    with pytest.raises(ConfigError, match="window.pulse_width_ps"):
        load_config(write(tmp_path, "window.pulse_width_ps = -3\n"))


def test_duplicate_key_is_rejected(tmp_path: Path) -> None:
    text = "window.pulse_width_ps = 5000\n[window]\npulse_width_ps = 6000\n"

    with pytest.raises(ConfigError, match="Duplicate"):
        load_config(write(tmp_path, text))


def test_missing_file_is_a_config_error(tmp_path: Path) -> None:
    with pytest.raises(ConfigError, match="Cannot read"):
        load_config(str(tmp_path / "absent.ini"))


def test_seed_precedence(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    path = write(tmp_path, "experiment.seed = 7\n")

    assert load_config(path).seed == 7

    monkeypatch.setenv(SEED_ENV_VAR, "99")
    assert load_config(path).seed == 99
    assert load_config(path, seed=5).seed == 5

    monkeypatch.setenv(SEED_ENV_VAR, "nope")
    with pytest.raises(ConfigError, match=SEED_ENV_VAR):
        load_config(path)


def test_enum_and_method_values(tmp_path: Path) -> None:
    config = load_config(
        write(
            tmp_path,
            "experiment.accidental_method = PureTriple\n"
            "source.kind = coherent\nexperiment.mode = 2d\n",
        )
    )

    assert config.accidental_method is AccidentalMethod.PURE_TRIPLE
    assert config.source.kind is SourceKind.COHERENT
    assert config.pair is CountPair.BBPRIME


def test_invalid_apparatus_lists_every_problem(tmp_path: Path) -> None:
    text = "splitter.transmit = 0.8\nsplitter.reflect = 0.4\ndetectors.a.efficiency = 2\n"

    with pytest.raises(ConfigError) as excinfo:
        load_config(write(tmp_path, text))

    message = str(excinfo.value)
    assert "splitter.transmit + splitter.reflect" in message
    assert "detectors.a.efficiency" in message


def test_regime_rules() -> None:
    thermal_quantum = replace(
        ExperimentConfig(), source=replace(ExperimentConfig().source, kind=SourceKind.THERMAL)
    )
    semiclassical_pairs = replace(ExperimentConfig(), regime=Regime.SEMI_CLASSICAL)

    assert any("regime semiclassical" in e for e in validate_config(thermal_quantum))
    assert any("regime quantum" in e for e in validate_config(semiclassical_pairs))
    assert validate_config(ExperimentConfig()) == []


def thermal_config(**changes) -> ExperimentConfig:
    base = replace(
        ExperimentConfig(),
        source=replace(ExperimentConfig().source, kind=SourceKind.THERMAL),
        mode=Mode.TWO_DETECTOR,
        regime=Regime.SEMI_CLASSICAL,
    )
    return replace(base, **changes)


def test_thermal_chunks_must_fit_bins_and_coherence_intervals() -> None:
    config = thermal_config(
        source=SourceConfig(kind=SourceKind.THERMAL, coherence_time=30_000, bin_width=3_000),
        chunk_duration=10_000,
        run_duration=60_000,
    )

    problems = validate_config(config)

    assert "experiment.chunk_duration_s must be a multiple of source.bin_width_ps" in problems
    assert (
        "experiment.chunk_duration_s must be a multiple of source.coherence_time_ps" in problems
    )
    assert not any("run_duration_s" in e for e in problems)


def test_thermal_bins_per_chunk_are_capped() -> None:
    config = thermal_config(chunk_duration=10 * PS_PER_SECOND)

    problems = validate_config(config)

    assert any(
        "source.bin_width_ps = 100000 gives 100000000 bins per chunk" in e for e in problems
    )
    assert validate_config(thermal_config()) == []


def test_coherent_semiclassical_runs_need_no_bins() -> None:
    config = replace(
        thermal_config(),
        source=SourceConfig(kind=SourceKind.COHERENT, mean_rate=33_400, bin_width=1_000),
    )

    assert validate_config(config) == []


def test_detector_pulse_width_mismatch_is_only_a_warning(
    caplog: pytest.LogCaptureFixture, tmp_path: Path
) -> None:
    config = ExperimentConfig(window=CoincidenceWindow(pulse_width=7_500))

    warnings = config_warnings(config)

    assert len(warnings) == 3
    assert "detectors.a.pulse_width_ps = 5000" in warnings[0]
    assert validate_config(config) == []
    with caplog.at_level("WARNING", logger="config"):
        load_config(write(tmp_path, "window.pulse_width_ps = 7500\n"))
    assert "differs from window.pulse_width_ps" in caplog.text
