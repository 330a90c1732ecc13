"""PTAG binary time-tag files and CSV result export.

PTAG layout, all integers little-endian::

    header  (30 bytes)  magic "PTAG" | version u16 | resolution_ps u64
                        | duration_ticks u64 | record_count u64
    record  (9 bytes)   time_ticks u64 | channel u8 (0=A, 1=B, 2=B')

Records are stored in (time, channel) order, so writing the same streams
twice gives byte-identical files.
"""

from __future__ import annotations

import csv
import logging
import struct
from collections.abc import Iterable, Mapping
from typing import BinaryIO, TextIO

import numpy as np

from config.models import Channel, ExperimentConfig
from services.coincidence import AccidentalEstimate, CountSummary
from services.exceptions import (
    InvalidArgumentError,
    TagFormatError,
    TagOrderError,
    TagTruncationError,
    TagWriteError,
)
from services.statistics import AlphaResult
from services.streams import TimeTagStream, first_disorder

logger = logging.getLogger(__name__)

MAGIC = b"PTAG"
VERSION = 1
RESOLUTION_PS = 1
HEADER = struct.Struct("<4sHQQQ")
RECORD = np.dtype([("time", "<u8"), ("channel", "u1")])

CSV_COLUMNS = (
    "window_ns",
    "r_a",
    "r_b",
    "r_bprime",
    "r_ab",
    "r_abprime",
    "r_bbprime",
    "r_abbprime",
    "acc_2d",
    "acc_3d",
    "alpha",
    "alpha_std",
    "violation_sigma",
)

_INT64_MAX = np.iinfo(np.int64).max


def _merged(streams: Mapping[Channel, TimeTagStream]) -> TimeTagStream:
    if not streams:
        raise InvalidArgumentError("write_tags needs at least one stream")
    durations = {stream.duration for stream in streams.values()}
    if len(durations) != 1:
        raise InvalidArgumentError(
            f"streams must share one duration, got {sorted(durations)} ps"
        )
    return TimeTagStream.merge(*streams.values())


def write_tags(streams: Mapping[Channel, TimeTagStream], sink: BinaryIO) -> int:
    """Write a header and the merged, time-ordered records; return the record count."""
    merged = _merged(streams)
    records = np.empty(len(merged), dtype=RECORD)
    records["time"] = merged.times
    records["channel"] = merged.channels
    header = HEADER.pack(MAGIC, VERSION, RESOLUTION_PS, merged.duration, len(merged))

    written = 0
    try:
        for chunk in (header, records.tobytes()):
            count = sink.write(chunk)
            written += len(chunk) if count is None else count
    except OSError as e:
        logger.error("PTAG write failed after %d bytes: %s", written, e)
        raise TagWriteError(written, e) from e
    return len(merged)


def _read_exact(source: BinaryIO, size: int) -> bytes:
    data = source.read(size)
    return data if data is not None else b""


def _read_all(source: BinaryIO) -> bytes:
    data = source.read()
    return data if data is not None else b""


def read_tags(source: BinaryIO, *, sort: bool = False) -> dict[Channel, TimeTagStream]:
    """Parse and validate a PTAG file, returning one stream per channel.

    Out-of-order records raise TagOrderError unless `sort` is set, in which
    case they are put in order with a logged warning.
    """
    raw_header = _read_exact(source, HEADER.size)
    if len(raw_header) < HEADER.size:
        raise TagTruncationError(
            len(raw_header), f"Header truncated at byte offset {len(raw_header)}."
        )
    magic, version, resolution, duration_ticks, record_count = HEADER.unpack(raw_header)
    if magic != MAGIC:
        raise TagFormatError(f"Bad magic {magic!r}; expected {MAGIC!r}.")
    if version != VERSION:
        raise TagFormatError(f"Unsupported PTAG version {version}.")
    if not 1 <= resolution <= _INT64_MAX:
        raise TagFormatError(f"resolution_ps {resolution} is outside [1, {_INT64_MAX}].")
    duration = duration_ticks * resolution
    if duration > _INT64_MAX:
        raise TagFormatError(f"Duration {duration} ps overflows 64-bit time.")

    # Read what is there rather than trusting record_count for the size.
    body = _read_all(source)
    expected = record_count * RECORD.itemsize
    if len(body) < expected:
        complete = len(body) // RECORD.itemsize
        offset = HEADER.size + complete * RECORD.itemsize
        raise TagTruncationError(
            offset,
            f"Record {complete} of {record_count} truncated at byte offset {offset}.",
        )
    if len(body) > expected:
        raise TagFormatError(
            f"Trailing bytes after {record_count} records "
            f"(offset {HEADER.size + expected})."
        )

    records = np.frombuffer(body, dtype=RECORD)
    channels = records["channel"].astype(np.uint8)
    bad_channel = np.flatnonzero(channels > max(Channel))
    if bad_channel.size:
        index = int(bad_channel[0])
        raise TagFormatError(f"Record {index} has unknown channel {int(channels[index])}.")

    ticks = records["time"]
    beyond = np.flatnonzero(ticks >= np.uint64(duration_ticks))
    if beyond.size:
        raise TagFormatError(
            f"Record {int(beyond[0])} time is not below the header duration {duration} ps."
        )
    times = ticks.astype(np.int64) * resolution

    disorder = first_disorder(times, channels)
    if disorder >= 0:
        if not sort:
            raise TagOrderError(disorder)
        logger.warning(
            "PTAG records out of order from record %d; sorting on request.", disorder
        )
    merged = TimeTagStream.from_arrays(times, channels, duration, sort=sort)
    return merged.split_channels()


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.6g}"


def export_summary_csv(
    results: Iterable[tuple[ExperimentConfig | None, CountSummary, AlphaResult]],
    sink: TextIO,
) -> int:
    """Write one row per (config, CountSummary, AlphaResult); return the row count.

    Rates are Hz with six significant digits. acc_3d uses the config's
    accidental method (composite when no config is given).
    """
    writer = csv.writer(sink, lineterminator="\n")
    rows = 0
    try:
        writer.writerow(CSV_COLUMNS)
        for config, summary, result in results:
            rates = summary.rates
            accidentals = AccidentalEstimate.from_summary(summary)
            method = config.accidental_method if config is not None else "composite"
            writer.writerow(
                [
                    _fmt(summary.window_ns),
                    *(
                        _fmt(rates[name])
                        for name in CSV_COLUMNS[1:8]
                    ),
                    _fmt(accidentals.rate_2d),
                    _fmt(accidentals.rate_3d(method)),
                    _fmt(result.alpha_mean),
                    _fmt(result.alpha_std),
                    _fmt(result.violation_sigma),
                ]
            )
            rows += 1
    except OSError as e:
        logger.error("CSV export failed after %d rows: %s", rows, e)
        raise
    return rows
