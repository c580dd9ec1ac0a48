"""
Coarse-to-fine registration loop.

register() estimates T with target ~ T * source. Every iteration shoots
normals from the source under the current estimate, reads the median pair
distance off the histogram, optionally drops pairs far from it, solves the
regularized linear system and composes the re-orthonormalized increment on
the left of the estimate.

Levels run coarsest first. A level stops after its fixed cadence, or in
median mode once the median has stayed in one histogram bin for
convergence_patience successive updates.
"""

import csv
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from app.correspond import (
    build_histogram,
    default_band,
    median_filter,
    median_from_cdf,
    normal_shoot,
)
from app.errors import ConfigError, TrackingError
from app.geom import (
    RigidTransform,
    UnitQuaternion,
    geodesic_angle,
    orthonormalize,
    small_angle_transform,
)
from app.models import IcpConfig, IcpMode
from app.pyramid import CloudPyramid
from app.solver import Regularizer, build_normal_equations, pointwise_residual, solve_regularized

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ["frame", "level", "iteration", "median", "kept_fraction", "rms_residual", "pairs"]


@dataclass(frozen=True)
class TraceRow:
    level: int
    iteration: int
    median: float
    kept_fraction: float
    rms_residual: float
    pairs: int
    frame: int = 0


@dataclass(frozen=True)
class IcpResult:
    transform: RigidTransform
    converged: bool
    iterations_per_level: Tuple[int, ...]
    final_median: float
    kept_fraction_history: Tuple[float, ...] = ()
    residual_history: Tuple[float, ...] = ()
    trace: Tuple[TraceRow, ...] = ()
    tracking_lost: bool = False
    failure: Optional[str] = None

    @property
    def total_iterations(self) -> int:
        return sum(self.iterations_per_level)


def seed_from_imu(
    prev_pose: RigidTransform,
    imu_prev: UnitQuaternion,
    imu_curr: UnitQuaternion,
    extrinsic: Optional[RigidTransform] = None,
) -> RigidTransform:
    """
    Predict the current camera pose from two orientation readings.

    The IMU rotation delta is conjugated into the camera frame by the
    extrinsic rotation; the translation is carried over from prev_pose.
    """
    e = np.eye(3) if extrinsic is None else extrinsic.rotation
    delta = e @ imu_prev.to_matrix().T @ imu_curr.to_matrix() @ e.T
    return prev_pose.compose(RigidTransform(delta, np.zeros(3)))


def median_converged(medians: Sequence[float], bin_width: float, patience: int = 3) -> bool:
    """True when the last patience + 1 medians all share one bin"""
    if len(medians) < patience + 1:
        return False
    recent = np.asarray(medians[-(patience + 1):], dtype=float)
    return float(np.ptp(recent)) < bin_width * (1.0 - 1e-9)


def register(
    source: CloudPyramid,
    target: CloudPyramid,
    seed: RigidTransform,
    cfg: IcpConfig,
) -> IcpResult:
    """
    Align source onto target starting from seed.

    A tracking failure on a coarse level keeps the current estimate and
    moves on to the next finer level; on the finest level it marks the
    result as tracking-lost.
    """
    if len(source) != len(target):
        raise ConfigError(f"Pyramid depth mismatch: {len(source)} vs {len(target)}")
    if len(source) != cfg.levels:
        raise ConfigError(f"Pyramid has {len(source)} levels, config expects {cfg.levels}")

    reg = Regularizer(cfg.lam, cfg.lambda_mode)
    estimate = seed
    iterations: List[int] = []
    trace: List[TraceRow] = []
    kept_history: List[float] = []
    residual_history: List[float] = []
    finest_medians: List[float] = []
    converged = False
    tracking_lost = False
    failure = None

    for level in reversed(range(cfg.levels)):
        bin_width, d_max = cfg.histogram.range_for_level(level)
        max_dist = cfg.max_dist_for(level)
        limit = cfg.iterations_for(level) if cfg.mode == IcpMode.FIXED_CADENCE else cfg.max_iters_per_level

        medians: List[float] = []
        rule_fired = False
        done = 0

        try:
            while done < limit:
                pairs = normal_shoot(
                    source[level], target[level], estimate, max_dist,
                    step_len=bin_width, normal_gate_deg=cfg.normal_gate_deg,
                )
                histogram = build_histogram(pairs, bin_width, d_max, cfg.partitions)
                median = median_from_cdf(histogram)

                kept_fraction = 1.0
                if cfg.filter_enabled:
                    band = default_band(histogram, median, cfg.histogram.band_kappa, cfg.histogram.min_band_bins)
                    pairs, kept_fraction = median_filter(pairs, median, band)

                ne = build_normal_equations(pairs, cfg.partitions)
                x = solve_regularized(ne, reg, cfg.rcond, cfg.require_full_rank)
                _, rms = pointwise_residual(pairs, x)
                estimate = orthonormalize(small_angle_transform(x)).compose(estimate)

                done += 1
                medians.append(median)
                kept_history.append(kept_fraction)
                residual_history.append(rms)
                trace.append(TraceRow(level, done, median, kept_fraction, rms, len(pairs)))
                logger.debug(
                    "level %d iter %d: median %.5f kept %.3f rms %.6f pairs %d",
                    level, done, median, kept_fraction, rms, len(pairs),
                )

                if cfg.mode == IcpMode.MEDIAN_CONVERGENCE and median_converged(
                    medians, bin_width, cfg.convergence_patience
                ):
                    rule_fired = True
                    break

        except TrackingError as e:
            if level == 0:
                tracking_lost = True
                failure = type(e).__name__
                logger.warning("Tracking lost at finest level: %s", e)
            else:
                logger.warning("Level %d failed (%s); continuing at level %d", level, e, level - 1)

        iterations.append(done)
        if level == 0:
            finest_medians = medians
            if cfg.mode == IcpMode.MEDIAN_CONVERGENCE:
                converged = rule_fired
            else:
                converged = median_converged(medians, bin_width, cfg.convergence_patience)

    return IcpResult(
        transform=estimate,
        converged=converged and not tracking_lost,
        iterations_per_level=tuple(iterations),
        final_median=finest_medians[-1] if finest_medians else math.nan,
        kept_fraction_history=tuple(kept_history),
        residual_history=tuple(residual_history),
        trace=tuple(trace),
        tracking_lost=tracking_lost,
        failure=failure,
    )


def classify_failure(
    result: IcpResult,
    truth: RigidTransform,
    rot_tol: float = 5.0,
    trans_tol: float = 0.05,
) -> bool:
    """Failed iff tracking was lost or the error exceeds rot_tol degrees / trans_tol meters"""
    if result.tracking_lost:
        return True
    rotation_error = math.degrees(geodesic_angle(result.transform.rotation, truth.rotation))
    translation_error = float(np.linalg.norm(result.transform.translation - truth.translation))
    return rotation_error > rot_tol or translation_error > trans_tol


def stamp_trace(rows: Iterable[TraceRow], frame: int) -> List[TraceRow]:
    return [replace(row, frame=frame) for row in rows]


def write_trace_csv(rows: Iterable[TraceRow], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(TRACE_COLUMNS)
        for row in rows:
            writer.writerow([
                row.frame, row.level, row.iteration,
                f"{row.median:.6f}", f"{row.kept_fraction:.4f}", f"{row.rms_residual:.9f}", row.pairs,
            ])
    return path
