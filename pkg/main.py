from __future__ import annotations

import argparse
import asyncio
import io
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import aiofiles

from config import config_warnings, load_config, validate_config
from config.models import (
    AccidentalMethod,
    Channel,
    CoincidenceWindow,
    CountPair,
    ExperimentConfig,
    Mode,
)
from services.coincidence import AccidentalEstimate, CountSummary, summarize
from services.exceptions import (
    ConfigError,
    InvalidArgumentError,
    TagFileError,
    UndefinedStatisticError,
)
from services.reproduce import Table, render_checks, reproduce
from services.run_report import RunReport
from services.statistics import (
    AlphaResult,
    RunCallback,
    alpha,
    corrected_alpha_2d,
    corrected_alpha_3d,
    poisson_alpha_uncertainty,
    run_ensemble,
    violation_sigma,
)
from services.streams import TimeTagStream
from services.timetag_io import export_summary_csv, read_tags, write_tags
from utils.helpers import format_rate, ns_to_ps, ps_to_seconds
from utils.logging import setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3

CsvRow = tuple[ExperimentConfig | None, CountSummary, AlphaResult]


def run_tag_path(path: str, run_index: int) -> Path:
    """PATH with `_run{index:03d}` inserted before the suffix."""
    base = Path(path)
    return base.with_name(f"{base.stem}_run{run_index:03d}{base.suffix}")


async def write_csv(path: str, rows: list[CsvRow]) -> int:
    buffer = io.StringIO()
    count = export_summary_csv(rows, buffer)
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    async with aiofiles.open(path, "w", encoding="utf-8", newline="") as f:
        await f.write(buffer.getvalue())
    logger.info("Wrote %d CSV row(s) to %s", count, path)
    return count


async def write_tag_file(path: Path, streams: dict[Channel, TimeTagStream]) -> int:
    buffer = io.BytesIO()
    records = await asyncio.to_thread(write_tags, streams, buffer)
    path.parent.mkdir(parents=True, exist_ok=True)
    async with aiofiles.open(path, "wb") as f:
        await f.write(buffer.getvalue())
    return records


async def read_tag_file(path: str, sort: bool) -> dict[Channel, TimeTagStream]:
    async with aiofiles.open(path, "rb") as f:
        data = await f.read()
    return await asyncio.to_thread(read_tags, io.BytesIO(data), sort=sort)


def tag_writer(path: str) -> RunCallback:
    """Callback writing each run's streams to its own PTAG file."""

    async def write_run(run_index: int, streams: dict[Channel, TimeTagStream]) -> None:
        target = run_tag_path(path, run_index)
        records = await write_tag_file(target, streams)
        logger.info("Run %d: wrote %d records to %s", run_index, records, target)

    return write_run


def apply_overrides(config: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    """Apply command-line flags on top of the loaded config and revalidate."""
    changes: dict[str, object] = {}
    try:
        if getattr(args, "window_ns", None) is not None:
            changes["window"] = CoincidenceWindow.from_window_ns(args.window_ns)
        if getattr(args, "method", None):
            changes["accidental_method"] = AccidentalMethod.parse(args.method)
    except InvalidArgumentError as e:
        raise ConfigError(str(e)) from e
    if getattr(args, "mode", None):
        changes["mode"] = Mode(args.mode)
    if not changes:
        return config

    config = replace(config, **changes)
    errors = validate_config(config)
    if errors:
        raise ConfigError(f"Configuration errors: {'; '.join(errors)}")
    return config


def _load_experiment(args: argparse.Namespace) -> ExperimentConfig:
    config = apply_overrides(load_config(args.config, seed=args.seed), args)
    setup_logging(log_file=config.log_file, log_level=config.log_level)
    return config


def _new_report(label: str, config: ExperimentConfig) -> RunReport:
    report = RunReport(label=label)
    for warning in config_warnings(config):
        report.add_warning(warning)
    return report


async def cmd_simulate(args: argparse.Namespace) -> int:
    """Run the configured ensemble, print the result and write the CSV summary."""
    config = _load_experiment(args)
    report = _new_report("simulate", config)
    logger.info(
        "Simulating %d run(s) of %.3g s: %s source, %s regime, %s mode, seed %d",
        config.n_runs,
        ps_to_seconds(config.run_duration),
        config.source.kind.value,
        config.regime.value,
        config.mode.value,
        config.seed,
    )

    on_run = tag_writer(args.tags) if args.tags else None
    start_time = time.time()
    try:
        result = await run_ensemble(config, report=report, on_run=on_run)
    except UndefinedStatisticError as e:
        logger.error("Simulation produced no usable runs: %s", e)
        print(f"ERROR: {e}", file=sys.stderr)
        return EXIT_DATA
    logger.info("Ensemble finished in %.2f seconds", time.time() - start_time)

    if report.has_problems:
        logger.warning(
            "%d run(s) excluded, %d warning(s); see the report",
            len(report.exclusions),
            len(report.warnings),
        )
    print(report.render_text(result, config.accidental_method))
    if args.out:
        await write_csv(args.out, [(config, result.summary, result)])
    return EXIT_OK


def _analysis_pair(mode: Mode, streams: dict[Channel, TimeTagStream]) -> CountPair:
    if mode is Mode.TWO_DETECTOR and not len(streams[Channel.A]):
        return CountPair.BBPRIME
    return CountPair.AB


def _render_summary(summary: CountSummary) -> list[str]:
    rates = summary.rates
    return [
        f"Counting time T = {summary.duration_seconds:g} s, window Δt = {summary.window_ns:g} ns",
        f"N_A={summary.n_a}  N_B={summary.n_b}  N_B'={summary.n_bprime}",
        f"N_AB={summary.n_ab}  N_AB'={summary.n_abprime}  N_BB'={summary.n_bbprime}  "
        f"N_ABB'={summary.n_abbprime}",
        f"R_A={format_rate(rates['r_a'])} Hz  R_B={format_rate(rates['r_b'])} Hz  "
        f"R_B'={format_rate(rates['r_bprime'])} Hz",
    ]


async def cmd_analyze(args: argparse.Namespace) -> int:
    """Count coincidences in a PTAG file and print α with its accidental estimates."""
    setup_logging(log_file=None, log_level=args.log_level)
    try:
        window = CoincidenceWindow.from_window_ns(args.window_ns)
        mode = Mode(args.mode)
        method = AccidentalMethod.parse(args.method)
        offsets = (ns_to_ps(args.offset_b_ns), ns_to_ps(args.offset_bprime_ns))
        streams = await read_tag_file(args.tags, args.sort)
        duration = next(iter(streams.values())).duration
        if duration <= 0:
            raise InvalidArgumentError(f"{args.tags} declares a zero counting time")
        summary = summarize(
            streams[Channel.A],
            streams[Channel.B],
            streams[Channel.BPRIME],
            window,
            offsets,
            pair=_analysis_pair(mode, streams),
        )
    except (TagFileError, InvalidArgumentError, OSError) as e:
        logger.error("Cannot analyze %s: %s", args.tags, e)
        print(f"ERROR: {args.tags}: {e}", file=sys.stderr)
        return EXIT_DATA

    lines = _render_summary(summary)
    symbol = "α³ᵈ" if mode is Mode.THREE_DETECTOR else "α²ᵈ"
    result: AlphaResult | None = None
    try:
        value = alpha(summary, mode)
    except UndefinedStatisticError as e:
        lines.append(f"{symbol} undefined: {e}")
    else:
        corrected = (
            corrected_alpha_3d(summary, method)
            if mode is Mode.THREE_DETECTOR
            else corrected_alpha_2d(summary)
        )
        lines.append(f"{symbol} = {value:.6g} (accidental-corrected {corrected:.6g})")
        try:
            sigma = poisson_alpha_uncertainty(summary, mode)
        except UndefinedStatisticError as e:
            sigma = None
            lines.append(f"Poisson σ undefined: {e}")
        else:
            lines.append(f"Poisson σ = {sigma:.3g}")
        # A single file has no ensemble spread; the Poisson σ stands in for it.
        result = AlphaResult(
            alpha_mean=value,
            alpha_std=sigma or 0.0,
            n_runs=1,
            violation_sigma=violation_sigma(value, sigma) if sigma else None,
            accidentals=AccidentalEstimate.from_summary(summary),
            mode=mode,
            alphas=(value,),
            poisson_sigma=sigma,
            summary=summary,
        )

    accidentals = AccidentalEstimate.from_summary(summary)
    lines.extend(
        [
            f"Accidental twofold rate: {accidentals.rate_2d:.4g} Hz",
            f"Accidental threefold rate (paper):       {accidentals.rate_3d_paper:.4g} Hz",
            f"Accidental threefold rate (composite):   {accidentals.rate_3d_composite:.4g} Hz",
            f"Accidental threefold rate (puretriple):  {accidentals.rate_3d_pure_triple:.4g} Hz",
            f"Selected method: {method.value}",
        ]
    )
    print("\n".join(lines))

    if args.out and result is not None:
        config = ExperimentConfig(window=window, mode=mode, accidental_method=method)
        await write_csv(args.out, [(config, summary, result)])
    return EXIT_OK


async def cmd_reproduce(args: argparse.Namespace) -> int:
    """Recompute the published tables from their printed rates."""
    setup_logging(log_file=None, log_level=args.log_level)
    tables = [Table.parse(args.table)] if args.table else list(Table)
    blocks = [render_checks(reproduce(table)) for table in tables]
    print("\n\n".join(blocks))
    return EXIT_OK


def parse_values(raw: str) -> list[float]:
    try:
        values = [float(item) for item in raw.split(",") if item.strip()]
    except ValueError:
        raise ConfigError(f"--values must be comma-separated numbers, got {raw!r}") from None
    if not values:
        raise ConfigError("--values needs at least one value")
    return values


def sweep_config(config: ExperimentConfig, axis: str, value: float) -> ExperimentConfig:
    try:
        if axis == "window":
            swept = config.with_pulse_width(CoincidenceWindow.from_window_ns(value).pulse_width)
        else:
            swept = config.with_rate(value)
    except InvalidArgumentError as e:
        raise ConfigError(f"--values {value:g}: {e}") from e
    errors = validate_config(swept)
    if errors:
        raise ConfigError(f"--values {value:g}: {'; '.join(errors)}")
    return swept


async def cmd_sweep(args: argparse.Namespace) -> int:
    """One ensemble per swept value, all on the same seed, one CSV row each."""
    config = _load_experiment(args)
    values = parse_values(args.values)
    configs = [sweep_config(config, args.axis, value) for value in values]

    rows: list[CsvRow] = []
    for value, swept in zip(values, configs):
        report = _new_report(f"sweep {args.axis}={value:g}", swept)
        try:
            result = await run_ensemble(swept, report=report)
        except UndefinedStatisticError as e:
            logger.error("Sweep value %g produced no usable runs: %s", value, e)
            print(f"ERROR: {args.axis}={value:g}: {e}", file=sys.stderr)
            return EXIT_DATA
        print(report.render_text(result, swept.accidental_method))
        print()
        rows.append((swept, result.summary, result))

    if args.out:
        await write_csv(args.out, rows)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="photocorr",
        description="Photon anti-correlation simulator and time-tag analyzer.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_experiment_flags(command: argparse.ArgumentParser) -> None:
        command.add_argument("--config", default=None, help="Experiment config file.")
        command.add_argument("--out", default=None, help="CSV summary path.")
        command.add_argument("--seed", type=int, default=None, help="Overrides PCL_SEED and the config.")
        command.add_argument("--method", choices=[m.value for m in AccidentalMethod], default=None)

    simulate = sub.add_parser("simulate", help="Run an ensemble of simulated runs.")
    add_experiment_flags(simulate)
    simulate.add_argument("--tags", default=None, help="Write one PTAG file per run.")
    simulate.add_argument("--window-ns", type=float, default=None)
    simulate.add_argument("--mode", choices=[m.value for m in Mode], default=None)
    simulate.set_defaults(handler=cmd_simulate)

    analyze = sub.add_parser("analyze", help="Analyze a PTAG time-tag file.")
    analyze.add_argument("--tags", required=True, help="PTAG file to read.")
    analyze.add_argument("--window-ns", type=float, default=10.0)
    analyze.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.THREE_DETECTOR.value)
    analyze.add_argument(
        "--method",
        choices=[m.value for m in AccidentalMethod],
        default=AccidentalMethod.COMPOSITE.value,
    )
    analyze.add_argument("--offset-b-ns", type=float, default=0.0)
    analyze.add_argument("--offset-bprime-ns", type=float, default=0.0)
    analyze.add_argument("--sort", action="store_true", help="Sort out-of-order records.")
    analyze.add_argument("--out", default=None, help="CSV summary path.")
    analyze.add_argument("--log-level", default="WARNING")
    analyze.set_defaults(handler=cmd_analyze)

    reproduce_cmd = sub.add_parser("reproduce", help="Recompute the published tables.")
    reproduce_cmd.add_argument("table", nargs="?", choices=[t.value for t in Table], default=None)
    reproduce_cmd.add_argument("--log-level", default="WARNING")
    reproduce_cmd.set_defaults(handler=cmd_reproduce)

    sweep = sub.add_parser("sweep", help="Run one ensemble per window or rate value.")
    add_experiment_flags(sweep)
    sweep.add_argument("--axis", choices=["window", "rate"], required=True)
    sweep.add_argument("--values", required=True, help="Comma-separated ns or Hz values.")
    sweep.set_defaults(handler=cmd_sweep)
    return parser


async def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return await args.handler(args)
    except ConfigError as e:
        logger.error("Configuration error: %s", e)
        print(f"CRITICAL: Configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except InvalidArgumentError as e:
        logger.error("Invalid experiment setting: %s", e)
        print(f"CRITICAL: Invalid experiment setting: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (TagFileError, OSError) as e:
        logger.critical("Output failed: %s", e, exc_info=True)
        print(f"CRITICAL: Output failed: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    raise SystemExit(asyncio.run(main()))
