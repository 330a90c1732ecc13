from __future__ import annotations

import configparser
import logging
import os
from collections.abc import Callable
from enum import Enum
from typing import TypeVar

from services.exceptions import ConfigError, InvalidArgumentError

from .models import (
    AccidentalMethod,
    Channel,
    CoincidenceWindow,
    DetectorConfig,
    ExperimentConfig,
    Mode,
    PS_PER_SECOND,
    Regime,
    SourceConfig,
    SourceKind,
    SplitterConfig,
)

logger = logging.getLogger(__name__)

T = TypeVar("T")

ROOT_SECTION = "__root__"
SEED_ENV_VAR = "PCL_SEED"
VALID_LOG_LEVELS = frozenset(["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"])
SEED_LIMIT = 2**64
# Float64 levels per thermal chunk; 10^7 bins is about 80 MB per trace.
MAX_TRACE_BINS = 10_000_000

_DETECTOR_FIELDS = {
    "efficiency": "efficiency",
    "dark_rate": "dark_rate",
    "dead_time_ps": "dead_time",
    "pulse_width_ps": "pulse_width",
    "jitter_ps": "jitter",
}

KNOWN_KEYS = frozenset(
    [
        "source.kind",
        "source.mean_rate",
        "source.coherence_time_ps",
        "source.pair_jitter_ps",
        "source.bin_width_ps",
        "splitter.transmit",
        "splitter.reflect",
        "window.pulse_width_ps",
        "offsets.b_ps",
        "offsets.bprime_ps",
        "experiment.n_runs",
        "experiment.run_duration_s",
        "experiment.seed",
        "experiment.mode",
        "experiment.regime",
        "experiment.workers",
        "experiment.chunk_duration_s",
        "experiment.accidental_method",
        "settings.log_file",
        "settings.log_level",
    ]
    + [
        f"detectors.{channel.key}.{name}"
        for channel in Channel
        for name in _DETECTOR_FIELDS
    ]
)


def _to_int(raw: str) -> int:
    try:
        return int(raw)
    except ValueError:
        value = float(raw)
        if not value.is_integer():
            raise ValueError(f"expected an integer, got {raw}") from None
        return int(value)


def _to_ps(raw: str) -> int:
    return round(float(raw) * PS_PER_SECOND)


def _to_enum(enum_type: type[Enum]) -> Callable[[str], Enum]:
    def convert(raw: str) -> Enum:
        try:
            return enum_type(raw.strip().lower())
        except ValueError:
            choices = ", ".join(member.value for member in enum_type)
            raise ValueError(f"expected one of {choices}") from None

    return convert


def _read_flat(config_path: str) -> dict[str, str]:
    """Read a dotted-key file into {"section.key": value}.

    Keys before any section header belong to an implicit root section, so
    `detectors.a.efficiency = 0.04` and `[detectors.a]` + `efficiency = 0.04`
    are the same setting.
    """
    try:
        with open(config_path, encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"Cannot read config file {config_path}: {e}") from e

    parser = configparser.ConfigParser(
        interpolation=None,
        default_section="__defaults__",
        inline_comment_prefixes=("#", ";"),
    )
    parser.optionxform = str
    try:
        parser.read_string(f"[{ROOT_SECTION}]\n{text}", source=config_path)
    except configparser.Error as e:
        raise ConfigError(f"Malformed config file {config_path}: {e}") from e

    values: dict[str, str] = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            name = key.strip() if section == ROOT_SECTION else f"{section.strip()}.{key.strip()}"
            if name in values:
                raise ConfigError(f"Duplicate config key: {name}")
            values[name] = value.strip()
    return values


def _get(values: dict[str, str], key: str, convert: Callable[[str], T], default: T) -> T:
    raw = values.get(key)
    if raw is None or raw == "":
        return default
    try:
        return convert(raw)
    except (ValueError, InvalidArgumentError) as e:
        raise ConfigError(f"Invalid value for {key}: {raw!r} ({e})") from None


def _seed_from_env(default: int) -> int:
    raw = os.environ.get(SEED_ENV_VAR)
    if raw is None or not raw.strip():
        return default
    try:
        return int(raw.strip())
    except ValueError:
        raise ConfigError(f"Invalid value for {SEED_ENV_VAR}: {raw!r}") from None


def _build(values: dict[str, str]) -> ExperimentConfig:
    unknown = sorted(set(values) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"Unknown config key: {unknown[0]}")

    defaults = ExperimentConfig()
    run_duration = _get(values, "experiment.run_duration_s", _to_ps, defaults.run_duration)

    base = defaults.source
    source = SourceConfig(
        kind=_get(values, "source.kind", _to_enum(SourceKind), base.kind),
        mean_rate=_get(values, "source.mean_rate", float, base.mean_rate),
        coherence_time=_get(
            values, "source.coherence_time_ps", _to_int, base.coherence_time
        ),
        pair_jitter=_get(values, "source.pair_jitter_ps", float, base.pair_jitter),
        duration=run_duration,
        bin_width=_get(values, "source.bin_width_ps", _to_int, base.bin_width),
    )
    splitter = SplitterConfig(
        transmit=_get(values, "splitter.transmit", float, defaults.splitter.transmit),
        reflect=_get(values, "splitter.reflect", float, defaults.splitter.reflect),
    )

    detectors: dict[Channel, DetectorConfig] = {}
    for channel in Channel:
        default = defaults.detector(channel)
        fields = {
            attr: _get(
                values,
                f"detectors.{channel.key}.{name}",
                float if attr in ("efficiency", "dark_rate", "jitter") else _to_int,
                getattr(default, attr),
            )
            for name, attr in _DETECTOR_FIELDS.items()
        }
        detectors[channel] = DetectorConfig(**fields)

    window = _get(
        values,
        "window.pulse_width_ps",
        lambda raw: CoincidenceWindow(pulse_width=_to_int(raw)),
        defaults.window,
    )
    offsets = {
        Channel.B: _get(values, "offsets.b_ps", _to_int, 0),
        Channel.BPRIME: _get(values, "offsets.bprime_ps", _to_int, 0),
    }

    return ExperimentConfig(
        source=source,
        splitter=splitter,
        detectors=detectors,
        window=window,
        offsets=offsets,
        n_runs=_get(values, "experiment.n_runs", _to_int, defaults.n_runs),
        run_duration=run_duration,
        seed=_seed_from_env(_get(values, "experiment.seed", _to_int, defaults.seed)),
        mode=_get(values, "experiment.mode", _to_enum(Mode), defaults.mode),
        regime=_get(values, "experiment.regime", _to_enum(Regime), defaults.regime),
        workers=_get(values, "experiment.workers", _to_int, defaults.workers),
        chunk_duration=_get(
            values, "experiment.chunk_duration_s", _to_ps, defaults.chunk_duration
        ),
        accidental_method=_get(
            values,
            "experiment.accidental_method",
            AccidentalMethod.parse,
            defaults.accidental_method,
        ),
        log_file=_get(values, "settings.log_file", str, defaults.log_file),
        log_level=_get(values, "settings.log_level", str, defaults.log_level).upper(),
    )


def validate_config(config: ExperimentConfig) -> list[str]:
    errors: list[str] = []
    errors.extend(config.source.problems("source"))
    errors.extend(config.splitter.problems("splitter"))
    for channel in Channel:
        errors.extend(config.detector(channel).problems(f"detectors.{channel.key}"))

    if config.n_runs < 1:
        errors.append("experiment.n_runs must be >= 1")
    if config.run_duration <= 0:
        errors.append("experiment.run_duration_s must be > 0")
    if config.workers < 1:
        errors.append("experiment.workers must be >= 1")
    if config.chunk_duration <= 0:
        errors.append("experiment.chunk_duration_s must be > 0")
    if not 0 <= config.seed < SEED_LIMIT:
        errors.append("experiment.seed must be a 64-bit unsigned integer")
    if config.log_level not in VALID_LOG_LEVELS:
        errors.append(f"settings.log_level must be one of {', '.join(sorted(VALID_LOG_LEVELS))}")

    kind = config.source.kind
    if config.regime is Regime.QUANTUM:
        if kind is SourceKind.THERMAL:
            errors.append("source.kind thermal requires experiment.regime semiclassical")
        if config.mode is Mode.THREE_DETECTOR and kind is not SourceKind.SPDC_PAIRS:
            errors.append("experiment.mode 3d requires source.kind spdc_pairs")
    else:
        if kind is SourceKind.SPDC_PAIRS:
            errors.append("source.kind spdc_pairs requires experiment.regime quantum")
        if config.mode is Mode.THREE_DETECTOR:
            errors.append("experiment.mode 3d requires experiment.regime quantum")
        if kind is SourceKind.THERMAL:
            errors.extend(_thermal_trace_problems(config))
    return errors


def _thermal_trace_problems(config: ExperimentConfig) -> list[str]:
    """Bin and chunk rules for the binned thermal intensity trace."""
    errors: list[str] = []
    bin_width = config.source.bin_width
    coherence_time = config.source.coherence_time
    if bin_width <= 0 or coherence_time <= 0:
        return errors
    if bin_width * 10 > coherence_time:
        errors.append("source.bin_width_ps must be at most source.coherence_time_ps / 10")
    # Each chunk draws its own levels, so chunk edges must fall on level edges.
    for key, duration in (
        ("experiment.chunk_duration_s", config.chunk_duration),
        ("experiment.run_duration_s", config.run_duration),
    ):
        if duration % bin_width:
            errors.append(f"{key} must be a multiple of source.bin_width_ps")
        if duration % coherence_time:
            errors.append(f"{key} must be a multiple of source.coherence_time_ps")
    bins = min(config.chunk_duration, config.run_duration) // bin_width
    if bins > MAX_TRACE_BINS:
        errors.append(
            f"source.bin_width_ps = {bin_width} gives {bins} bins per chunk "
            f"(limit {MAX_TRACE_BINS}); raise source.bin_width_ps "
            "or lower experiment.chunk_duration_s"
        )
    return errors


def config_warnings(config: ExperimentConfig) -> list[str]:
    """Non-fatal inconsistencies worth surfacing in the run report."""
    warnings: list[str] = []
    pulse_width = config.window.pulse_width
    for channel in Channel:
        detector = config.detector(channel)
        if detector.pulse_width != pulse_width:
            warnings.append(
                f"detectors.{channel.key}.pulse_width_ps = {detector.pulse_width} "
                f"differs from window.pulse_width_ps = {pulse_width}; "
                "the window setting is used"
            )
    return warnings


def load_config(
    config_path: str | None = None,
    *,
    seed: int | None = None,
) -> ExperimentConfig:
    """Load and validate an experiment config.

    With no path the built-in defaults are used. The seed comes from
    `seed` if given, else PCL_SEED, else experiment.seed.
    """
    values = _read_flat(config_path) if config_path else {}
    config = _build(values)
    if seed is not None:
        config = config.with_seed(seed)

    errors = validate_config(config)
    if errors:
        raise ConfigError(f"Configuration errors: {'; '.join(errors)}")

    for warning in config_warnings(config):
        logger.warning("%s", warning)
    return config
