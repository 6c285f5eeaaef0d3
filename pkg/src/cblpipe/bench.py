"""Benchmark harness: prebuilt vs runtime-install pipeline timing.

Runs the pipeline repeatedly per mode with a monotonic clock; in
runtime-install mode each iteration is prepended with one simulated
install step (a sleep of the stated delay) per dependency, keeping the
comparison hermetic and deterministic. Reports mean and population
standard deviation plus the percentage reduction between modes.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass

from . import engine, platform
from .errors import PipelineFailure, ValidationError, ZeroBaselineError

MODE_PREBUILT = "prebuilt"
MODE_RUNTIME_INSTALL = "runtime-install"
MODES = (MODE_PREBUILT, MODE_RUNTIME_INSTALL)


@dataclass(frozen=True)
class BenchConfig:
    mode: str
    iterations: int
    pipeline: engine.PipelineConfig
    simulated_install: tuple[tuple[str, int], ...] = ()

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"unknown bench mode {self.mode!r}")
        if self.iterations < 1:
            raise ValidationError("iterations must be >= 1")
        object.__setattr__(self, "simulated_install", tuple(self.simulated_install))
        for name, delay_ms in self.simulated_install:
            if delay_ms < 0:
                raise ValidationError(f"install delay for {name} must be >= 0")


@dataclass(frozen=True)
class BenchReport:
    mode: str
    samples: tuple[float, ...]  # milliseconds
    mean_ms: float
    stddev_ms: float  # population
    iterations: int

    @classmethod
    def from_samples(cls, mode: str, samples: list[float]) -> "BenchReport":
        return cls(
            mode=mode,
            samples=tuple(samples),
            mean_ms=statistics.fmean(samples),
            stddev_ms=statistics.pstdev(samples),
            iterations=len(samples),
        )

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "iterations": self.iterations,
            "samples_ms": list(self.samples),
            "mean_ms": self.mean_ms,
            "stddev_ms": self.stddev_ms,
        }


def _make_default_runner(env: dict[str, str] | None):
    def runner(cfg: engine.PipelineConfig) -> None:
        report = engine.run_quiet(
            cfg, platform.BackendKind.LOCAL, env=env, workspace=cfg.source_dir.parent
        )
        if report.overall != engine.PASSED:
            raise PipelineFailure("benchmark pipeline run failed")

    return runner


def run_bench(cfg: BenchConfig, pipeline_runner=None, env: dict[str, str] | None = None) -> BenchReport:
    """Execute the pipeline ``iterations`` times and collect timings.

    Iterations are strictly sequential; parallel runs would contaminate
    the samples. ``env`` feeds the default pipeline runner; a custom
    ``pipeline_runner(pipeline_config)`` replaces it entirely.
    """
    runner = pipeline_runner or _make_default_runner(env)
    samples: list[float] = []
    for _ in range(cfg.iterations):
        start = time.monotonic()
        if cfg.mode == MODE_RUNTIME_INSTALL:
            for _name, delay_ms in cfg.simulated_install:
                time.sleep(delay_ms / 1000.0)
        runner(cfg.pipeline)
        samples.append((time.monotonic() - start) * 1000.0)
    return BenchReport.from_samples(cfg.mode, samples)


@dataclass(frozen=True)
class ReductionSummary:
    baseline_mean_ms: float
    candidate_mean_ms: float
    reduction_pct: float
    text: str

    def to_dict(self) -> dict:
        return {
            "baseline_mean_ms": self.baseline_mean_ms,
            "candidate_mean_ms": self.candidate_mean_ms,
            "reduction_pct": self.reduction_pct,
            "text": self.text,
        }


def compare(baseline: BenchReport, candidate: BenchReport) -> ReductionSummary:
    """Percentage reduction of the candidate's mean runtime vs the baseline."""
    if not baseline.samples or not candidate.samples:
        raise ValidationError("bench reports must contain samples")
    if baseline.mean_ms == 0:
        raise ZeroBaselineError("baseline mean is zero; reduction is undefined")
    pct = (baseline.mean_ms - candidate.mean_ms) / baseline.mean_ms * 100.0
    text = (
        f"{pct:.1f}% reduction "
        f"({baseline.mean_ms / 1000.0:.1f} s → {candidate.mean_ms / 1000.0:.1f} s)"
    )
    return ReductionSummary(baseline.mean_ms, candidate.mean_ms, pct, text)


def format_table(reports: list[BenchReport], summary: ReductionSummary | None = None) -> str:
    lines = [f"{'mode':<18} {'n':>3} {'mean s':>10} {'stddev s':>10}"]
    for report in reports:
        lines.append(
            f"{report.mode:<18} {report.iterations:>3} "
            f"{report.mean_ms / 1000.0:>10.3f} {report.stddev_ms / 1000.0:>10.3f}"
        )
    if summary is not None:
        lines.append(summary.text)
    return "\n".join(lines)
