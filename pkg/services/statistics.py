from __future__ import annotations

import asyncio
import logging
import math
from collections.abc import Awaitable, Callable, Sequence
from dataclasses import dataclass

import numpy as np

from config.models import AccidentalMethod, Channel, ExperimentConfig, Mode
from services.coincidence import AccidentalEstimate, CountSummary
from services.exceptions import InvalidArgumentError, UndefinedStatisticError
from services.experiment import simulate_and_count
from services.run_report import RunReport
from services.streams import TimeTagStream
from utils.helpers import split_seed

logger = logging.getLogger(__name__)

RunCallback = Callable[[int, dict[Channel, TimeTagStream]], Awaitable[None]]


@dataclass(frozen=True)
class AlphaResult:
    """Anti-correlation estimate over an ensemble of runs (or a single file)."""

    alpha_mean: float
    alpha_std: float
    n_runs: int
    violation_sigma: float | None
    accidentals: AccidentalEstimate
    mode: Mode
    alphas: tuple[float, ...] = ()
    n_excluded: int = 0
    poisson_sigma: float | None = None
    summary: CountSummary | None = None

    def __post_init__(self) -> None:
        if self.alpha_mean < 0 or self.alpha_std < 0:
            raise InvalidArgumentError("alpha_mean and alpha_std must be >= 0")
        if self.n_runs < 1:
            raise InvalidArgumentError("n_runs must be >= 1")
        if self.violation_sigma is not None and self.alpha_std <= 0:
            raise InvalidArgumentError("violation_sigma needs a positive alpha_std")


def alpha_2d_from_rates(r_xy: float, r_x: float, r_y: float, window: float) -> float:
    """R_xy / (R_x·R_y·Δt), window in seconds."""
    if r_x <= 0 or r_y <= 0 or window <= 0:
        raise UndefinedStatisticError("α²ᵈ needs positive singles rates and window")
    return r_xy / (r_x * r_y * window)


def alpha_3d_from_rates(r_abbprime: float, r_a: float, r_ab: float, r_abprime: float) -> float:
    """R_ABB′·R_A / (R_AB·R_AB′)."""
    if r_ab <= 0 or r_abprime <= 0:
        raise UndefinedStatisticError("α³ᵈ needs positive AB and AB′ coincidence rates")
    return r_abbprime * r_a / (r_ab * r_abprime)


def _pair_counts(summary: CountSummary) -> tuple[int, int, int]:
    x, y = summary.pair.channels
    n_x, n_y = summary.singles(x), summary.singles(y)
    if n_x <= 0 or n_y <= 0:
        raise UndefinedStatisticError(
            f"α²ᵈ undefined: no singles on {x.name if n_x <= 0 else y.name}"
        )
    return summary.coincidences(summary.pair), n_x, n_y


def alpha_2d(summary: CountSummary) -> float:
    """(N_xy / (N_x·N_y))·(T/Δt) over the summary's designated channel pair."""
    n_xy, n_x, n_y = _pair_counts(summary)
    return (n_xy * summary.duration) / (n_x * n_y * summary.window)


def alpha_3d(summary: CountSummary) -> float:
    """N_ABB′·N_A / (N_AB·N_AB′): heralded single photons give 0, classical light >= 1."""
    if summary.n_ab <= 0 or summary.n_abprime <= 0:
        raise UndefinedStatisticError(
            "α³ᵈ undefined: no AB or AB′ coincidences to condition on"
        )
    return summary.n_abbprime * summary.n_a / (summary.n_ab * summary.n_abprime)


def alpha(summary: CountSummary, mode: Mode) -> float:
    return alpha_3d(summary) if mode is Mode.THREE_DETECTOR else alpha_2d(summary)


def corrected_alpha_2d(summary: CountSummary) -> float:
    """α²ᵈ with the expected accidental count Δt·R_x·R_y·T removed from N_xy."""
    n_xy, n_x, n_y = _pair_counts(summary)
    accidental = AccidentalEstimate.from_summary(summary).rate_2d * summary.duration_seconds
    return max(0.0, n_xy - accidental) * summary.duration / (n_x * n_y * summary.window)


def corrected_alpha_3d(
    summary: CountSummary,
    method: AccidentalMethod | str = AccidentalMethod.COMPOSITE,
) -> float:
    """α³ᵈ with the expected three-fold accidental count removed from N_ABB′."""
    base = alpha_3d(summary)
    if summary.n_abbprime == 0:
        return base
    accidental = (
        AccidentalEstimate.from_summary(summary).rate_3d(method) * summary.duration_seconds
    )
    return base * max(0.0, summary.n_abbprime - accidental) / summary.n_abbprime


def violation_sigma(alpha_mean: float, alpha_std: float) -> float:
    """Standard deviations by which α undercuts the classical bound α >= 1."""
    if not alpha_std > 0:
        raise UndefinedStatisticError("violation undefined for zero spread")
    return (1.0 - alpha_mean) / alpha_std


def ideal_alpha_2d(twin_rate: float, window: float, efficiency: float = 1.0) -> float:
    """α²ᵈ of perfectly paired twins at `twin_rate` Hz: efficiency / (Δt·R)."""
    if twin_rate <= 0 or window <= 0:
        raise InvalidArgumentError("twin_rate and window must be > 0")
    if not 0 < efficiency <= 1:
        raise InvalidArgumentError("efficiency must be in (0, 1]")
    return efficiency / (window * twin_rate)


def poisson_alpha_uncertainty(summary: CountSummary, mode: Mode) -> float:
    """First-order σ_α from √N counting noise on every count in the α formula."""
    if mode is Mode.THREE_DETECTOR:
        counts = (summary.n_abbprime, summary.n_ab, summary.n_abprime, summary.n_a)
    else:
        x, y = summary.pair.channels
        counts = (
            summary.coincidences(summary.pair),
            summary.singles(x),
            summary.singles(y),
        )
    if min(counts) <= 0:
        raise UndefinedStatisticError("Poisson uncertainty needs every count > 0")
    return alpha(summary, mode) * math.sqrt(sum(1.0 / n for n in counts))


def ensemble_result(
    summaries: Sequence[CountSummary],
    mode: Mode,
    report: RunReport | None = None,
) -> AlphaResult:
    """Fold per-run summaries, in run order, into one AlphaResult."""
    if not summaries:
        raise InvalidArgumentError("no runs to aggregate")
    alphas: list[float] = []
    for run_index, summary in enumerate(summaries):
        try:
            alphas.append(alpha(summary, mode))
        except UndefinedStatisticError as e:
            logger.warning("Run %d excluded from ensemble: %s", run_index, e)
            if report is not None:
                report.record_exclusion(run_index, str(e))
    if not alphas:
        raise UndefinedStatisticError(
            f"α undefined in all {len(summaries)} run(s); nothing to average"
        )

    values = np.asarray(alphas)
    mean = float(values.mean())
    std = float(values.std(ddof=1)) if values.size > 1 else 0.0
    pooled = CountSummary.pooled(summaries)
    try:
        poisson_sigma = poisson_alpha_uncertainty(pooled, mode)
    except UndefinedStatisticError:
        poisson_sigma = None
    return AlphaResult(
        alpha_mean=mean,
        alpha_std=std,
        n_runs=values.size,
        violation_sigma=violation_sigma(mean, std) if std > 0 else None,
        accidentals=AccidentalEstimate.from_summary(pooled),
        mode=mode,
        alphas=tuple(alphas),
        n_excluded=len(summaries) - values.size,
        poisson_sigma=poisson_sigma,
        summary=pooled,
    )


async def run_ensemble(
    config: ExperimentConfig,
    *,
    report: RunReport | None = None,
    on_run: RunCallback | None = None,
) -> AlphaResult:
    """Simulate `config.n_runs` independent runs and aggregate their α.

    Runs execute on worker threads, at most `config.workers` at a time; each
    uses the child seed split_seed(config.seed, run_index), so the result does
    not depend on completion order.
    """
    if config.n_runs < 1:
        raise InvalidArgumentError("n_runs must be >= 1")
    semaphore = asyncio.Semaphore(max(1, config.workers))

    async def one_run(run_index: int) -> CountSummary:
        async with semaphore:
            seed = split_seed(config.seed, run_index)
            streams, summary = await asyncio.to_thread(
                simulate_and_count, config, seed
            )
            logger.info(
                "Run %d/%d: N_A=%d N_B=%d N_B'=%d N_AB=%d N_AB'=%d N_BB'=%d N_ABB'=%d",
                run_index + 1,
                config.n_runs,
                summary.n_a,
                summary.n_b,
                summary.n_bprime,
                summary.n_ab,
                summary.n_abprime,
                summary.n_bbprime,
                summary.n_abbprime,
            )
            if on_run is not None:
                await on_run(run_index, streams)
            return summary

    summaries = await asyncio.gather(
        *(one_run(run_index) for run_index in range(config.n_runs))
    )
    return ensemble_result(summaries, config.mode, report)
