"""
Bench Runner - executes registration trials and benchmark suites

This runner:
1. Runs angular trials under several registration configs
2. Records per-trial outcomes with error metrics
3. Aggregates failure rates per angle and config
4. Runs the iteration benchmark over odometry presets
5. Keeps an execution history for reporting

Trials may run in parallel; results are merged by trial index so tables
come out in the same order for any worker count.
"""

import csv
import io
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.bench.registry import get_scene
from app.bench.trials import BENCH_INTRINSICS, Trial, trial_generator
from app.geom import RigidTransform, geodesic_angle
from app.icp import IcpResult, classify_failure, register
from app.models import IcpConfig, ImuMode, RunConfig
from app.pyramid import Intrinsics, build_pyramid
from app.report_helpers import format_ms, format_pct, improvement_pct

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BenchConfig:
    """A named registration setup; seeded runs start from the exact rotation"""
    name: str
    icp: IcpConfig
    seeded: bool


def default_sweep_configs() -> List[BenchConfig]:
    return [
        BenchConfig("original", IcpConfig.baseline(), seeded=False),
        BenchConfig("seeded", IcpConfig(), seeded=True),
    ]


class TrialResult:
    """Result of one registration trial with metrics"""

    def __init__(
        self,
        trial_index: int,
        angle_deg: float,
        config: str,
        failed: bool,
        rotation_error_deg: float,
        translation_error_m: float,
        iterations: int,
        converged: bool,
        tracking_lost: bool,
        execution_time: float,
    ):
        self.trial_index = trial_index
        self.angle_deg = angle_deg
        self.config = config
        self.failed = failed
        self.rotation_error_deg = rotation_error_deg
        self.translation_error_m = translation_error_m
        self.iterations = iterations
        self.converged = converged
        self.tracking_lost = tracking_lost
        self.execution_time = execution_time

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary for logging/storage"""
        return {
            "trial": self.trial_index,
            "angle_deg": self.angle_deg,
            "config": self.config,
            "failed": self.failed,
            "rotation_error_deg": round(self.rotation_error_deg, 6),
            "translation_error_m": round(self.translation_error_m, 6),
            "iterations": self.iterations,
            "converged": self.converged,
            "tracking_lost": self.tracking_lost,
            "execution_time_seconds": round(self.execution_time, 3),
        }


@dataclass
class AngleSweepReport:
    angles: List[float]
    configs: List[str]
    results: List[TrialResult]

    def failure_rate(self, angle: float, config: str) -> float:
        """Percentage of failed trials"""
        chosen = [r for r in self.results if r.angle_deg == angle and r.config == config]
        if not chosen:
            return math.nan
        return 100.0 * sum(r.failed for r in chosen) / len(chosen)

    def csv_text(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(["angle_deg"] + [f"{name}_failure_pct" for name in self.configs])
        for angle in self.angles:
            writer.writerow([f"{angle:g}"] + [f"{self.failure_rate(angle, name):.1f}" for name in self.configs])
        return buffer.getvalue()


@dataclass
class IterationBenchRow:
    run: str
    mean_iterations: float
    mean_ms_per_frame: float
    tracking_losses: int
    iteration_delta_pct: Optional[float]
    time_delta_pct: Optional[float]


@dataclass
class IterationBenchReport:
    rows: List[IterationBenchRow]

    def csv_text(self, with_timing: bool = False) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        header = ["run", "mean_iterations", "iteration_reduction_pct", "tracking_losses"]
        if with_timing:
            header += ["mean_ms_per_frame", "time_reduction_pct"]
        writer.writerow(header)
        for row in self.rows:
            line = [row.run, f"{row.mean_iterations:.4f}", format_pct(row.iteration_delta_pct), row.tracking_losses]
            if with_timing:
                line += [format_ms(row.mean_ms_per_frame), format_pct(row.time_delta_pct)]
            writer.writerow(line)
        return buffer.getvalue()


class BenchRunner:
    """
    Executes benchmark trials and tracks execution history.

    Handles:
    - Pyramid construction per trial
    - Seeding with the exact trial rotation
    - Failure classification
    - Parallel execution with index-ordered merging
    """

    def __init__(self, rot_tol: float = 5.0, trans_tol: float = 0.05):
        self.rot_tol = rot_tol
        self.trans_tol = trans_tol
        self.execution_history: List[TrialResult] = []

    def run_trial(self, trial: Trial, config: BenchConfig) -> Tuple[TrialResult, IcpResult]:
        """Register the trial's source onto its target under one config"""
        start_time = time.perf_counter()
        cfg = config.icp
        source = build_pyramid(trial.source, cfg.levels, cfg.half_window, cfg.disc_threshold)
        target = build_pyramid(trial.target, cfg.levels, cfg.half_window, cfg.disc_threshold)
        seed = trial.rotation_seed if config.seeded else RigidTransform.identity()

        result = register(source, target, seed, cfg)
        failed = classify_failure(result, trial.truth, self.rot_tol, self.trans_tol)
        trial_result = TrialResult(
            trial_index=trial.index,
            angle_deg=trial.angle_deg,
            config=config.name,
            failed=failed,
            rotation_error_deg=math.degrees(geodesic_angle(result.transform.rotation, trial.truth.rotation)),
            translation_error_m=float(np.linalg.norm(result.transform.translation - trial.truth.translation)),
            iterations=result.total_iterations,
            converged=result.converged,
            tracking_lost=result.tracking_lost,
            execution_time=time.perf_counter() - start_time,
        )
        logger.debug("trial %s", trial_result.to_dict())
        return trial_result, result

    def angle_sweep(
        self,
        scene: str,
        angles: Sequence[float],
        trials: int,
        configs: Optional[Sequence[BenchConfig]] = None,
        seed: int = 0,
        workers: int = 1,
        intrinsics: Intrinsics = BENCH_INTRINSICS,
        axis: Optional[Sequence[float]] = None,
    ) -> AngleSweepReport:
        """
        Failure rate per (angle, config) over seeded random trials.

        Every config sees the same trials.
        """
        if trials < 1:
            raise ValueError("trials must be >= 1")
        configs = list(configs or default_sweep_configs())
        scene_spec = get_scene(scene)

        jobs = []
        for angle in angles:
            for trial in trial_generator(scene_spec, angle, seed, trials, intrinsics, axis):
                jobs.extend((trial, config) for config in configs)

        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(lambda job: self.run_trial(*job)[0], jobs))
        else:
            results = [self.run_trial(*job)[0] for job in jobs]

        self.execution_history.extend(results)
        report = AngleSweepReport([float(a) for a in angles], [c.name for c in configs], results)
        for angle in report.angles:
            logger.info(
                "angle %5.1f deg: %s", angle,
                ", ".join(f"{name} {report.failure_rate(angle, name):.0f}%" for name in report.configs),
            )
        return report

    def iteration_bench(self, cfg: RunConfig) -> IterationBenchReport:
        """
        Mean iterations per frame for the three registration presets.

        The baseline tracks without orientation priors; the seeded presets
        use cfg.imu (ground truth when cfg leaves seeding off).
        """
        from app.odometry import get_runner as get_odometry_runner, load_sequence

        odometry = get_odometry_runner()
        sequence = load_sequence(cfg)
        seeded_imu = cfg.imu if cfg.imu.mode != ImuMode.OFF else cfg.imu.model_copy(update={"mode": ImuMode.GROUND_TRUTH})

        plan = [
            ("baseline_fixed", IcpConfig.baseline(), cfg.imu.model_copy(update={"mode": ImuMode.OFF})),
            ("seeded_fixed", IcpConfig.seeded_fixed(), seeded_imu),
            ("seeded_median", IcpConfig.seeded_median(), seeded_imu),
        ]

        runs = []
        for name, icp_cfg, imu_cfg in plan:
            run_cfg = cfg.model_copy(update={"icp": icp_cfg, "imu": imu_cfg})
            runs.append(odometry.run(run_cfg, sequence, name=name))

        base = runs[0]
        rows = [
            IterationBenchRow(
                run=run.name,
                mean_iterations=run.mean_iterations,
                mean_ms_per_frame=run.mean_ms_per_frame,
                tracking_losses=run.tracking_losses,
                iteration_delta_pct=improvement_pct(run.mean_iterations, base.mean_iterations),
                time_delta_pct=improvement_pct(run.mean_ms_per_frame, base.mean_ms_per_frame),
            )
            for run in runs
        ]
        return IterationBenchReport(rows)

    def get_execution_stats(self) -> Dict[str, Any]:
        """Aggregate statistics over all executed trials"""
        if not self.execution_history:
            return {"total_trials": 0, "failures": 0, "failure_rate": 0.0, "total_time_seconds": 0.0}

        failures = sum(r.failed for r in self.execution_history)
        return {
            "total_trials": len(self.execution_history),
            "failures": failures,
            "failure_rate": round(100.0 * failures / len(self.execution_history), 2),
            "mean_iterations": round(float(np.mean([r.iterations for r in self.execution_history])), 3),
            "total_time_seconds": round(sum(r.execution_time for r in self.execution_history), 2),
        }


# Global runner instance
_runner = None


def get_runner() -> BenchRunner:
    """Get the global bench runner"""
    global _runner
    if _runner is None:
        _runner = BenchRunner()
    return _runner
