"""
Trajectory metrics: absolute trajectory error (ATE), relative pose error
(RPE, translational part) and run-vs-baseline comparison reports.

Poses are matched by nearest timestamp within max_dt. ATE aligns the
estimate onto the truth with a rigid (no scale) least-squares fit first;
RPE compares relative motions and needs no alignment.
"""

import csv
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.dataset import DEFAULT_MAX_DT, Trajectory, associate
from app.errors import DegenerateAlignment, InsufficientOverlap
from app.geom import RigidTransform
from app.report_helpers import format_meters, format_pct, improvement_pct, render_template

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["run", "ate_rmse_m", "rpe_rmse_m", "ate_improvement_pct", "rpe_improvement_pct"]


@dataclass(frozen=True, eq=False)
class AteReport:
    rmse: float
    mean: float
    median: float
    max: float
    alignment: RigidTransform
    errors: np.ndarray
    matches: List[Tuple[int, int]] = field(default_factory=list)


@dataclass(frozen=True, eq=False)
class RpeReport:
    rmse: float
    mean: float
    delta: float
    unit: str
    errors: np.ndarray


def match_trajectories(est: Trajectory, truth: Trajectory, max_dt: float = DEFAULT_MAX_DT) -> List[Tuple[int, int]]:
    """(est index, truth index) pairs in time order"""
    return associate(est.timestamps, truth.timestamps, max_dt)


def umeyama_alignment(source: np.ndarray, target: np.ndarray) -> RigidTransform:
    """
    Rigid transform S minimising sum |target_i - S(source_i)|^2.

    Raises:
        DegenerateAlignment: fewer than 3 points, collinear points, or a
            best fit that is a genuine reflection
    """
    source = np.asarray(source, dtype=float).reshape(-1, 3)
    target = np.asarray(target, dtype=float).reshape(-1, 3)
    if source.shape[0] < 3:
        raise DegenerateAlignment(f"Need at least 3 positions, got {source.shape[0]}")

    mu_source = source.mean(axis=0)
    mu_target = target.mean(axis=0)
    centered_source = source - mu_source
    centered_target = target - mu_target

    spread = np.linalg.svd(centered_source, compute_uv=False)
    if spread[0] == 0 or spread[1] <= 1e-9 * spread[0]:
        raise DegenerateAlignment("Positions are collinear")

    covariance = centered_target.T @ centered_source / source.shape[0]
    u, d, vt = np.linalg.svd(covariance)

    s = np.eye(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0:
        if d[2] > 1e-9 * d[0]:
            raise DegenerateAlignment("Best rigid fit would be a reflection")
        # planar sets: flipping the null direction is a proper rotation
        s[2, 2] = -1.0

    rotation = u @ s @ vt
    return RigidTransform(rotation, mu_target - rotation @ mu_source)


def align_umeyama(est: Trajectory, truth: Trajectory, max_dt: float = DEFAULT_MAX_DT) -> RigidTransform:
    """Transform mapping estimated positions onto the truth"""
    matches = match_trajectories(est, truth, max_dt)
    est_idx = [i for i, _ in matches]
    truth_idx = [j for _, j in matches]
    return umeyama_alignment(est.positions[est_idx], truth.positions[truth_idx])


def ate(est: Trajectory, truth: Trajectory, max_dt: float = DEFAULT_MAX_DT) -> AteReport:
    """
    Absolute trajectory error after rigid alignment.

    Raises:
        InsufficientOverlap: fewer than 3 matched poses
        DegenerateAlignment: matched positions cannot be aligned
    """
    matches = match_trajectories(est, truth, max_dt)
    if len(matches) < 3:
        raise InsufficientOverlap(f"Only {len(matches)} matched poses (need 3)")

    est_positions = est.positions[[i for i, _ in matches]]
    truth_positions = truth.positions[[j for _, j in matches]]
    alignment = umeyama_alignment(est_positions, truth_positions)

    errors = np.linalg.norm(alignment.apply(est_positions) - truth_positions, axis=1)
    return AteReport(
        rmse=float(np.sqrt(np.mean(errors ** 2))),
        mean=float(np.mean(errors)),
        median=float(np.median(errors)),
        max=float(np.max(errors)),
        alignment=alignment,
        errors=errors,
        matches=matches,
    )


def _relative_error(p_i: RigidTransform, p_j: RigidTransform, q_i: RigidTransform, q_j: RigidTransform) -> float:
    est_motion = p_i.inverse().compose(p_j)
    true_motion = q_i.inverse().compose(q_j)
    return float(np.linalg.norm(true_motion.inverse().compose(est_motion).translation))


def rpe(
    est: Trajectory,
    truth: Trajectory,
    delta: float = 1,
    unit: str = "frames",
    max_dt: float = DEFAULT_MAX_DT,
) -> RpeReport:
    """
    Translational relative pose error over intervals of delta.

    With unit="frames" the interval is delta matched poses; with
    unit="seconds" each pose is paired with the first matched pose at
    least delta seconds later.

    Raises:
        InsufficientOverlap: no interval lies inside both trajectories
    """
    if unit not in ("frames", "seconds"):
        raise ValueError(f"unit must be 'frames' or 'seconds', got {unit!r}")
    if delta <= 0 or (unit == "frames" and int(delta) != delta):
        raise ValueError(f"delta must be a positive {'integer' if unit == 'frames' else 'number'}")

    matches = match_trajectories(est, truth, max_dt)
    times = np.array([truth.timestamps[j] for _, j in matches])

    pairs = []
    for k in range(len(matches)):
        if unit == "frames":
            m = k + int(delta)
        else:
            m = int(np.searchsorted(times, times[k] + delta - 1e-9, side="left"))
        if m < len(matches):
            pairs.append((k, m))

    if not pairs:
        raise InsufficientOverlap(f"No interval of {delta} {unit} inside both trajectories")

    errors = np.array([
        _relative_error(
            est.poses[matches[k][0]], est.poses[matches[m][0]],
            truth.poses[matches[k][1]], truth.poses[matches[m][1]],
        )
        for k, m in pairs
    ])
    return RpeReport(
        rmse=float(np.sqrt(np.mean(errors ** 2))),
        mean=float(np.mean(errors)),
        delta=float(delta),
        unit=unit,
        errors=errors,
    )


# -----------------------------
# Comparison reports
# -----------------------------

@dataclass(frozen=True)
class ComparisonRow:
    run: str
    ate_rmse: float
    rpe_rmse: float
    ate_improvement: Optional[float] = None
    rpe_improvement: Optional[float] = None


@dataclass
class ComparisonReport:
    baseline: str
    rows: List[ComparisonRow]
    title: str = "Trajectory comparison"

    def csv_text(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for row in self.rows:
            writer.writerow([
                row.run,
                format_meters(row.ate_rmse),
                format_meters(row.rpe_rmse),
                format_pct(row.ate_improvement),
                format_pct(row.rpe_improvement),
            ])
        return buffer.getvalue()

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.csv_text())
        return path

    def render_text(self) -> str:
        name_width = max([len("run")] + [len(row.run) for row in self.rows])
        return render_template(
            "comparison.txt.j2",
            title=self.title,
            baseline=self.baseline,
            rows=self.rows,
            name_width=name_width,
        )


def compare_report(
    runs: Sequence[Tuple[str, Trajectory, Trajectory]],
    baseline: Optional[str] = None,
    delta: float = 1,
    unit: str = "frames",
    max_dt: float = DEFAULT_MAX_DT,
    title: str = "Trajectory comparison",
) -> ComparisonReport:
    """
    ATE/RPE per run and improvement over the baseline run.

    runs are (name, estimate, truth); baseline defaults to the first run.
    """
    if not runs:
        raise ValueError("No runs to compare")

    metrics = {}
    for name, est, truth in runs:
        metrics[name] = (ate(est, truth, max_dt).rmse, rpe(est, truth, delta, unit, max_dt).rmse)

    baseline = baseline or runs[0][0]
    if baseline not in metrics:
        raise KeyError(f"Baseline run not found: {baseline}")
    base_ate, base_rpe = metrics[baseline]

    rows = [
        ComparisonRow(
            run=name,
            ate_rmse=metrics[name][0],
            rpe_rmse=metrics[name][1],
            ate_improvement=improvement_pct(metrics[name][0], base_ate),
            rpe_improvement=improvement_pct(metrics[name][1], base_rpe),
        )
        for name, _, _ in runs
    ]
    return ComparisonReport(baseline=baseline, rows=rows, title=title)


def render_trajectory_svg(
    est: Trajectory,
    truth: Trajectory,
    path=None,
    max_dt: float = DEFAULT_MAX_DT,
    size: int = 480,
    title: str = "trajectory",
) -> str:
    """
    Top view (x/z) of the aligned estimate over the truth with red segments
    joining matched poses. Written to path when given.
    """
    report = ate(est, truth, max_dt)
    est_xyz = report.alignment.apply(est.positions)
    truth_xyz = truth.positions

    both = np.vstack([est_xyz, truth_xyz])[:, [0, 2]]
    low = both.min(axis=0)
    span = float(max(np.ptp(both, axis=0).max(), 1e-6))
    margin = 30
    scale = (size - 2 * margin) / span

    def to_svg(xyz: np.ndarray) -> np.ndarray:
        xz = (xyz[:, [0, 2]] - low) * scale + margin
        # z grows upward on screen
        return np.column_stack([xz[:, 0], size - xz[:, 1]])

    est_px = to_svg(est_xyz)
    truth_px = to_svg(truth_xyz)

    def points(px: np.ndarray) -> str:
        return " ".join(f"{x:.2f},{y:.2f}" for x, y in px)

    errors = [
        tuple(round(float(v), 2) for v in (*est_px[i], *truth_px[j]))
        for i, j in report.matches
    ]
    svg = render_template(
        "trajectory.svg.j2",
        size=size,
        title=title,
        truth_points=points(truth_px),
        estimate_points=points(est_px),
        errors=errors,
        scale_label=f"{span:.3f} m across",
    )

    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(svg)
    return svg
