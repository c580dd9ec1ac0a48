"""
Odometry Runner - frame-to-frame tracking over a depth sequence

This runner:
1. Loads a TUM or synthetic sequence from a RunConfig
2. Seeds each registration from the orientation stream (if enabled)
3. Tracks every frame against the previous one
4. Holds the last pose on tracking loss and counts the losses
5. Writes trajectory, trace and summary files

Wall-clock timings go to the log and the execution history only, so the
files a run writes are identical between reruns.
"""

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.bench.registry import get_scene
from app.dataset import Trajectory, load_tum_sequence, orbit_motion, save_trajectory, synth_sequence
from app.errors import DataError
from app.evaluation import ate, compare_report, ComparisonReport
from app.geom import RigidTransform, UnitQuaternion
from app.icp import TraceRow, register, seed_from_imu, stamp_trace, write_trace_csv
from app.imu import stream_from_trajectory
from app.models import IcpConfig, ImuMode, IntrinsicsConfig, RunConfig, SourceKind
from app.pyramid import DepthImage, build_pyramid

logger = logging.getLogger(__name__)


@dataclass
class Frame:
    index: int
    timestamp: float
    depth: DepthImage
    truth: Optional[RigidTransform] = None


@dataclass
class LoadedSequence:
    name: str
    frames: List[Frame]
    skipped: int = 0

    @property
    def truth(self) -> Optional[Trajectory]:
        if not self.frames or any(f.truth is None for f in self.frames):
            return None
        return Trajectory([f.timestamp for f in self.frames], [f.truth for f in self.frames])


def load_sequence(cfg: RunConfig) -> LoadedSequence:
    """
    Materialise the frames a run config points at.

    Raises:
        UnknownScene: unknown synthetic scene
        DataError: unreadable or malformed TUM directory
    """
    source = cfg.source
    if source.kind == SourceKind.SYNTHETIC:
        intrinsics = (source.intrinsics or IntrinsicsConfig()).build()
        timestamps, poses = orbit_motion(source.motion)
        sequence = synth_sequence(get_scene(source.scene), poses, intrinsics, timestamps)
        frames = [
            Frame(k, t, depth, pose)
            for k, (t, depth, pose) in enumerate(zip(timestamps, sequence.frames, poses))
        ]
        name = f"synthetic-{source.scene}"
        skipped = 0
    else:
        intrinsics = source.intrinsics.build() if source.intrinsics else None
        index = load_tum_sequence(source.path, intrinsics, source.max_dt)
        loaded, skipped = index.load_frames()
        frames = [Frame(k, t, depth, pose) for k, (t, depth, pose) in enumerate(loaded)]
        name = Path(source.path).name

    if source.max_frames is not None:
        frames = frames[:source.max_frames]
    if len(frames) < 2:
        raise DataError(f"Sequence {name} has {len(frames)} usable frame(s); need at least 2")

    return LoadedSequence(name, frames, skipped)


@dataclass
class OdometryResult:
    """Outcome of one tracking run"""
    name: str
    estimate: Trajectory
    truth: Optional[Trajectory]
    trace: List[TraceRow]
    iterations: List[int]
    converged: List[bool]
    tracking_losses: int
    frame_ms: List[float] = field(default_factory=list)
    skipped_frames: int = 0

    @property
    def mean_iterations(self) -> float:
        return float(np.mean(self.iterations)) if self.iterations else 0.0

    @property
    def mean_ms_per_frame(self) -> float:
        return float(np.mean(self.frame_ms)) if self.frame_ms else 0.0

    def summary(self, with_timing: bool = False) -> Dict[str, Any]:
        summary = {
            "run": self.name,
            "frames": len(self.estimate),
            "registrations": len(self.iterations),
            "mean_iterations": round(self.mean_iterations, 4),
            "converged_frames": int(sum(self.converged)),
            "tracking_losses": self.tracking_losses,
            "skipped_frames": self.skipped_frames,
        }
        if self.truth is not None:
            try:
                summary["ate_rmse_m"] = round(ate(self.estimate, self.truth).rmse, 9)
            except DataError as e:
                logger.info("ATE not available for %s: %s", self.name, e)
                summary["ate_rmse_m"] = None
        if with_timing:
            summary["mean_ms_per_frame"] = round(self.mean_ms_per_frame, 3)
        return summary

    def write_outputs(self, output_dir, with_timing: bool = False) -> Dict[str, Path]:
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        paths = {
            "trajectory": save_trajectory(self.estimate, output_dir / "trajectory.txt"),
            "trace": write_trace_csv(self.trace, output_dir / "trace.csv"),
            "summary": output_dir / "summary.json",
        }
        paths["summary"].write_text(json.dumps(self.summary(with_timing), indent=2) + "\n")
        return paths


class OdometryRunner:
    """
    Runs frame-to-frame tracking and keeps an execution history.

    register() is called with the current frame as source and the previous
    frame as target, so pose_k = pose_{k-1} * T_k.
    """

    def __init__(self):
        self.execution_history: List[Dict[str, Any]] = []

    def run(self, cfg: RunConfig, sequence: Optional[LoadedSequence] = None, name: Optional[str] = None) -> OdometryResult:
        sequence = sequence or load_sequence(cfg)
        icp_cfg = cfg.icp
        frames = sequence.frames
        run_name = name or sequence.name
        truth = sequence.truth

        orientations = self._orientations(cfg, truth)
        extrinsic = cfg.imu.extrinsic_transform()

        pose = frames[0].truth if frames[0].truth is not None else RigidTransform.identity()
        poses = [pose]
        trace: List[TraceRow] = []
        iterations: List[int] = []
        converged: List[bool] = []
        frame_ms: List[float] = []
        losses = 0

        started = time.perf_counter()
        previous = self._pyramid(frames[0].depth, icp_cfg)

        for k in range(1, len(frames)):
            frame_start = time.perf_counter()
            current = self._pyramid(frames[k].depth, icp_cfg)

            if orientations is not None:
                seed = seed_from_imu(RigidTransform.identity(), orientations[k - 1], orientations[k], extrinsic)
            else:
                seed = RigidTransform.identity()

            result = register(current, previous, seed, icp_cfg)
            if result.tracking_lost:
                losses += 1
                logger.warning("%s frame %d: tracking lost (%s); holding pose", run_name, k, result.failure)
            else:
                pose = pose.compose(result.transform)

            poses.append(pose)
            trace.extend(stamp_trace(result.trace, k))
            iterations.append(result.total_iterations)
            converged.append(result.converged)
            frame_ms.append((time.perf_counter() - frame_start) * 1000.0)
            previous = current

        estimate = Trajectory([f.timestamp for f in frames], poses)
        odometry = OdometryResult(
            name=run_name,
            estimate=estimate,
            truth=truth,
            trace=trace,
            iterations=iterations,
            converged=converged,
            tracking_losses=losses,
            frame_ms=frame_ms,
            skipped_frames=sequence.skipped,
        )

        elapsed = time.perf_counter() - started
        self.execution_history.append({
            "run": run_name,
            "frames": len(frames),
            "mean_iterations": odometry.mean_iterations,
            "tracking_losses": losses,
            "execution_time_seconds": round(elapsed, 2),
        })
        logger.info(
            "%s: %d frames, %.2f iterations/frame, %d loss(es), %.1f ms/frame",
            run_name, len(frames), odometry.mean_iterations, losses, odometry.mean_ms_per_frame,
        )
        return odometry

    @staticmethod
    def _pyramid(depth: DepthImage, cfg: IcpConfig):
        return build_pyramid(depth, cfg.levels, cfg.half_window, cfg.disc_threshold)

    @staticmethod
    def _orientations(cfg: RunConfig, truth: Optional[Trajectory]) -> Optional[List[UnitQuaternion]]:
        """Simulated IMU readings per frame, None when seeding is off"""
        if cfg.imu.mode == ImuMode.OFF:
            return None
        if truth is None:
            raise DataError("IMU seeding needs ground-truth orientations")

        # IMU body orientation = camera orientation * extrinsic
        e = cfg.imu.extrinsic_transform()
        imu_truth = Trajectory(truth.timestamps, [pose.compose(e) for pose in truth.poses])
        model = cfg.imu.model if cfg.imu.mode == ImuMode.NOISY else None
        return [sample.q for sample in stream_from_trajectory(imu_truth, model)]

    def get_execution_stats(self) -> Dict[str, Any]:
        if not self.execution_history:
            return {"total_runs": 0, "total_frames": 0, "tracking_losses": 0, "total_time_seconds": 0.0}
        return {
            "total_runs": len(self.execution_history),
            "total_frames": sum(r["frames"] for r in self.execution_history),
            "tracking_losses": sum(r["tracking_losses"] for r in self.execution_history),
            "total_time_seconds": round(sum(r["execution_time_seconds"] for r in self.execution_history), 2),
        }


def run_lambda_sweep(
    cfg: RunConfig,
    lambdas: Sequence[float],
    runner: Optional["OdometryRunner"] = None,
) -> Tuple[ComparisonReport, List[OdometryResult]]:
    """
    One run per lambda plus an unregularized baseline, compared on ATE/RPE.

    The sequence is loaded once and shared by every run.
    """
    runner = runner or get_runner()
    sequence = load_sequence(cfg)
    if sequence.truth is None:
        raise DataError("A lambda sweep needs ground truth")

    plan = [("baseline", 0.0)] + [(f"lambda={lam:g}", float(lam)) for lam in lambdas]
    results = []
    for name, lam in plan:
        run_cfg = cfg.model_copy(update={"icp": cfg.icp.with_updates(lam=lam)})
        results.append(runner.run(run_cfg, sequence, name=name))

    report = compare_report(
        [(result.name, result.estimate, sequence.truth) for result in results],
        baseline="baseline",
        title=f"Regularization sweep on {sequence.name}",
    )
    return report, results


# Global runner instance
_runner = None


def get_runner() -> OdometryRunner:
    """Get the global odometry runner"""
    global _runner
    if _runner is None:
        _runner = OdometryRunner()
    return _runner
