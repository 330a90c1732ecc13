from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import TYPE_CHECKING

from config.models import AccidentalMethod, Mode
from utils.helpers import format_rate

if TYPE_CHECKING:
    from services.statistics import AlphaResult


@dataclass(frozen=True)
class RunExclusion:
    run_index: int
    reason: str


@dataclass
class RunReport:
    """Collect excluded runs and warnings from one ensemble and render the printed result."""

    label: str = "simulation"
    started_at: datetime = field(
        default_factory=lambda: datetime.now(timezone.utc)
    )
    exclusions: list[RunExclusion] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def record_exclusion(self, run_index: int, reason: str) -> None:
        self.exclusions.append(RunExclusion(run_index=run_index, reason=reason))

    def add_warning(self, issue: str) -> None:
        if issue and issue not in self.warnings:
            self.warnings.append(issue)

    @property
    def has_problems(self) -> bool:
        return bool(self.exclusions or self.warnings)

    def render_text(
        self,
        result: AlphaResult,
        method: AccidentalMethod = AccidentalMethod.COMPOSITE,
    ) -> str:
        symbol = "α³ᵈ" if result.mode is Mode.THREE_DETECTOR else "α²ᵈ"
        lines = [
            f"Anti-correlation result ({self.label})",
            f"Started:  {self.started_at:%Y-%m-%d %H:%M:%S} UTC",
        ]
        summary = result.summary
        if summary is not None:
            rates = summary.rates
            lines.extend(
                [
                    f"Window:   Δt = {summary.window_ns:g} ns, "
                    f"T = {summary.duration_seconds:g} s",
                    (
                        "Singles:  "
                        f"R_A={format_rate(rates['r_a'])} Hz  "
                        f"R_B={format_rate(rates['r_b'])} Hz  "
                        f"R_B'={format_rate(rates['r_bprime'])} Hz"
                    ),
                    (
                        "Pairs:    "
                        f"R_AB={format_rate(rates['r_ab'])} Hz  "
                        f"R_AB'={format_rate(rates['r_abprime'])} Hz  "
                        f"R_BB'={format_rate(rates['r_bbprime'])} Hz"
                    ),
                    f"Triples:  R_ABB'={format_rate(rates['r_abbprime'])} Hz",
                ]
            )

        lines.append(
            f"{symbol} = {result.alpha_mean:.6g} ± {result.alpha_std:.3g} "
            f"({result.n_runs} run(s), {result.n_excluded} excluded)"
        )
        if result.poisson_sigma is not None:
            lines.append(f"Poisson σ (pooled counts): {result.poisson_sigma:.3g}")
        if result.violation_sigma is not None:
            lines.append(f"Violation of α >= 1: {result.violation_sigma:.1f} σ")
        else:
            lines.append("Violation of α >= 1: undefined (zero spread)")

        accidentals = result.accidentals
        lines.extend(
            [
                "",
                "ACCIDENTALS",
                f"- twofold:               {accidentals.rate_2d:.4g} Hz",
                f"- threefold paper:       {accidentals.rate_3d_paper:.4g} Hz",
                f"- threefold composite:   {accidentals.rate_3d_composite:.4g} Hz",
                f"- threefold pure triple: {accidentals.rate_3d_pure_triple:.4g} Hz",
                f"  (reported method: {method.value})",
            ]
        )

        if self.warnings:
            lines.extend(["", "WARNINGS"])
            lines.extend(f"- {issue}" for issue in self.warnings)

        if self.exclusions:
            lines.extend(["", "EXCLUDED RUNS"])
            lines.extend(
                f"- run {exclusion.run_index} | {exclusion.reason}"
                for exclusion in self.exclusions
            )
        return "\n".join(lines)
