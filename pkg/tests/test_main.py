import csv
import io
from pathlib import Path

import pytest

import main
from config.models import Channel
from services.streams import TimeTagStream
from services.timetag_io import write_tags

SMALL_RUN = (
    "source.mean_rate = 20000\n"
    "detectors.a.efficiency = 0.5\n"
    "detectors.b.efficiency = 0.5\n"
    "detectors.bprime.efficiency = 0.5\n"
    "experiment.n_runs = 2\n"
    "experiment.run_duration_s = 0.2\n"
    "experiment.chunk_duration_s = 0.1\n"
    "settings.log_file = logs/test.log\n"
)


@pytest.fixture(autouse=True)
def workdir(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> Path:
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("PCL_SEED", raising=False)
    return tmp_path


def write_config(path: Path, text: str) -> str:
    path.write_text(text, encoding="utf-8")
    return str(path)


def test_run_tag_path_numbers_each_run() -> None:
    assert main.run_tag_path("out/tags.ptag", 3) == Path("out/tags_run003.ptag")
    assert main.run_tag_path("tags", 12) == Path("tags_run012")


def test_parse_values() -> None:
    assert main.parse_values("10, 20,40") == [10.0, 20.0, 40.0]
    with pytest.raises(main.ConfigError):
        main.parse_values("10,ten")
    with pytest.raises(main.ConfigError):
        main.parse_values(" , ")


@pytest.mark.asyncio
async def test_reproduce_prints_both_tables(capsys: pytest.CaptureFixture[str]) -> None:
    assert await main.main(["reproduce"]) == main.EXIT_OK

    out = capsys.readouterr().out
    assert "Reproduction of table1" in out
    assert "Reproduction of table2" in out


@pytest.mark.asyncio
async def test_unknown_config_key_exits_with_config_error(
    workdir: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    config = write_config(workdir / "bad.ini", "source.flavour = sweet\n")

    assert await main.main(["simulate", "--config", config]) == main.EXIT_CONFIG
    assert "source.flavour" in capsys.readouterr().err


@pytest.mark.asyncio
async def test_bad_window_flag_exits_with_config_error(workdir: Path) -> None:
    config = write_config(workdir / "small.ini", SMALL_RUN)

    code = await main.main(["simulate", "--config", config, "--window-ns", "-4"])

    assert code == main.EXIT_CONFIG


@pytest.mark.asyncio
async def test_corrupt_tag_file_exits_with_data_error(
    workdir: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    path = workdir / "broken.ptag"
    path.write_bytes(b"NOTATAGFILE")

    assert await main.main(["analyze", "--tags", str(path)]) == main.EXIT_DATA
    assert "broken.ptag" in capsys.readouterr().err
    assert await main.main(["analyze", "--tags", str(workdir / "absent.ptag")]) == 3


@pytest.mark.asyncio
async def test_analyze_without_tags_reports_undefined_alpha(
    workdir: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    path = workdir / "empty.ptag"
    with open(path, "wb") as f:
        write_tags({Channel.A: TimeTagStream.empty(10**12)}, f)

    assert await main.main(["analyze", "--tags", str(path), "--out", "empty.csv"]) == 0

    out = capsys.readouterr().out
    assert "α³ᵈ undefined" in out
    assert "Selected method: composite" in out
    assert not (workdir / "empty.csv").exists()


@pytest.mark.asyncio
async def test_analyze_two_detector_file_uses_the_split_beams(
    workdir: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    duration = 10**9
    times = list(range(0, duration, 10**6))
    path = workdir / "split.ptag"
    with open(path, "wb") as f:
        write_tags(
            {
                Channel.B: TimeTagStream.single(times, Channel.B, duration),
                Channel.BPRIME: TimeTagStream.single(
                    [t + 1_000 for t in times], Channel.BPRIME, duration
                ),
            },
            f,
        )

    code = await main.main(["analyze", "--tags", str(path), "--mode", "2d", "--out", "s.csv"])

    assert code == 0
    assert "N_BB'=1000" in capsys.readouterr().out
    with open(workdir / "s.csv", encoding="utf-8") as f:
        row = next(csv.DictReader(f))
    assert float(row["r_bbprime"]) == pytest.approx(1_000_000)
    assert float(row["alpha"]) == pytest.approx(100.0)


@pytest.mark.asyncio
async def test_simulate_writes_tags_that_analyze_can_read(
    workdir: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    config = write_config(workdir / "small.ini", SMALL_RUN)

    code = await main.main(
        [
            "simulate",
            "--config",
            config,
            "--tags",
            "tags/run.ptag",
            "--out",
            "results/summary.csv",
            "--seed",
            "3",
        ]
    )

    assert code == main.EXIT_OK
    out = capsys.readouterr().out
    assert "α³ᵈ =" in out
    assert "ACCIDENTALS" in out
    assert (workdir / "logs" / "test.log").exists()
    tag_files = sorted(p.name for p in (workdir / "tags").iterdir())
    assert tag_files == ["run_run000.ptag", "run_run001.ptag"]
    with open(workdir / "results" / "summary.csv", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    assert len(rows) == 1
    assert float(rows[0]["window_ns"]) == 10

    code = await main.main(["analyze", "--tags", "tags/run_run000.ptag"])

    assert code == main.EXIT_OK
    assert "N_AB=" in capsys.readouterr().out


@pytest.mark.asyncio
async def test_simulate_with_no_usable_runs_exits_with_data_error(workdir: Path) -> None:
    config = write_config(
        workdir / "blind.ini", SMALL_RUN + "detectors.b.efficiency = 0\n"
    )

    assert await main.main(["simulate", "--config", config]) == main.EXIT_CONFIG

    blind = SMALL_RUN.replace("detectors.b.efficiency = 0.5", "detectors.b.efficiency = 0")
    config = write_config(workdir / "blind.ini", blind)

    assert await main.main(["simulate", "--config", config]) == main.EXIT_DATA


@pytest.mark.asyncio
async def test_simulate_flags_report_problems_in_the_log(
    workdir: Path, capsys: pytest.CaptureFixture[str]
) -> None:
    config = write_config(
        workdir / "mismatch.ini", SMALL_RUN + "detectors.a.pulse_width_ps = 7500\n"
    )

    assert await main.main(["simulate", "--config", config, "--seed", "3"]) == main.EXIT_OK

    out = capsys.readouterr().out
    assert "WARNINGS" in out
    assert "detectors.a.pulse_width_ps = 7500" in out
    log_text = (workdir / "logs" / "test.log").read_text(encoding="utf-8")
    assert "warning(s); see the report" in log_text


@pytest.mark.asyncio
async def test_sweep_writes_one_row_per_value(workdir: Path) -> None:
    config = write_config(workdir / "small.ini", SMALL_RUN)

    code = await main.main(
        [
            "sweep",
            "--config",
            config,
            "--axis",
            "window",
            "--values",
            "10,40",
            "--out",
            "sweep.csv",
        ]
    )

    assert code == main.EXIT_OK
    rows = list(csv.DictReader(io.StringIO((workdir / "sweep.csv").read_text("utf-8"))))
    assert [float(row["window_ns"]) for row in rows] == [10.0, 40.0]
    assert float(rows[1]["r_ab"]) >= float(rows[0]["r_ab"])
