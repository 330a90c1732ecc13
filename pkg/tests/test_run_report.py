from datetime import datetime, timezone

from config.models import AccidentalMethod, Mode, PS_PER_SECOND
from services.coincidence import AccidentalEstimate, CountSummary
from services.run_report import RunReport
from services.statistics import AlphaResult


def heralded_result(violation: float | None = 81.75) -> AlphaResult:
    summary = CountSummary(
        n_a=444_000,
        n_b=222_000,
        n_bprime=222_000,
        n_ab=3_840,
        n_abprime=2_850,
        n_bbprime=1,
        n_abbprime=0,
        duration=30 * PS_PER_SECOND,
        window=10_000,
    )
    return AlphaResult(
        alpha_mean=0.019,
        alpha_std=0.012 if violation is not None else 0.0,
        n_runs=20,
        violation_sigma=violation,
        accidentals=AccidentalEstimate.from_summary(summary),
        mode=Mode.THREE_DETECTOR,
        summary=summary,
    )


def test_clean_report_has_no_problems_and_shows_its_start() -> None:
    report = RunReport(started_at=datetime(2026, 7, 14, 9, 30, tzinfo=timezone.utc))

    body = report.render_text(heralded_result())

    assert report.has_problems is False
    assert body.splitlines()[1] == "Started:  2026-07-14 09:30:00 UTC"
    assert "EXCLUDED RUNS" not in body


def test_report_renders_result_and_problems() -> None:
    report = RunReport(label="simulate")
    report.record_exclusion(3, "α³ᵈ undefined: no AB or AB′ coincidences to condition on")
    report.add_warning("detectors.b.pulse_width_ps = 4000 differs from window.pulse_width_ps")

    body = report.render_text(heralded_result(), AccidentalMethod.PAPER)

    assert report.has_problems is True
    assert body.startswith("Anti-correlation result (simulate)")
    assert "α³ᵈ = 0.019 ± 0.012 (20 run(s), 0 excluded)" in body
    assert "Violation of α >= 1: 81.8 σ" in body
    assert "R_A=14,800 Hz" in body
    assert "ACCIDENTALS" in body
    assert "(reported method: paper)" in body
    assert "WARNINGS" in body
    assert "EXCLUDED RUNS" in body
    assert "- run 3 | α³ᵈ undefined" in body


def test_zero_spread_has_undefined_violation() -> None:
    body = RunReport().render_text(heralded_result(violation=None))

    assert "Violation of α >= 1: undefined (zero spread)" in body
    assert "WARNINGS" not in body
    assert "(reported method: composite)" in body


def test_duplicate_warnings_are_suppressed() -> None:
    report = RunReport()

    report.add_warning("pulse width mismatch")
    report.add_warning("pulse width mismatch")
    report.add_warning("")

    assert report.warnings == ["pulse width mismatch"]
