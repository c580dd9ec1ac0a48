"""
Tests for trajectory metrics and comparison reports.

Verifies:
- ATE and RPE agree with brute-force reference computations
- ATE is invariant to rigid motion of the estimate; RPE to any fixed frame change
- Degenerate alignments are reported
- Comparison reports compute improvements and render tables
- The SVG plot contains both trajectories
"""

import numpy as np
import pytest

from app.dataset import Trajectory
from app.errors import DegenerateAlignment, InsufficientOverlap
from app.evaluation import (
    REPORT_COLUMNS,
    ComparisonReport,
    ComparisonRow,
    ate,
    compare_report,
    render_trajectory_svg,
    rpe,
    umeyama_alignment,
)
from app.geom import RigidTransform, exp_so3
from app.report_helpers import improvement_pct


def random_pose(rng, scale=1.0) -> RigidTransform:
    return RigidTransform(exp_so3(rng.normal(scale=0.5, size=3)), rng.normal(scale=scale, size=3))


def random_trajectory(rng, count=30) -> Trajectory:
    return Trajectory(np.arange(count) / 30.0, [random_pose(rng) for _ in range(count)])


def perturbed(traj: Trajectory, rng, noise=0.02) -> Trajectory:
    poses = [
        RigidTransform(exp_so3(rng.normal(scale=noise, size=3)) @ p.rotation, p.translation + rng.normal(scale=noise, size=3))
        for p in traj.poses
    ]
    return Trajectory(traj.timestamps, poses)


def reference_ate(est: np.ndarray, truth: np.ndarray) -> float:
    """Kabsch fit written out with explicit loops"""
    mu_e = sum(est) / len(est)
    mu_t = sum(truth) / len(truth)
    h = np.zeros((3, 3))
    for e, t in zip(est, truth):
        h += np.outer(e - mu_e, t - mu_t)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    shift = mu_t - r @ mu_e
    squared = [float(np.sum((r @ e + shift - t) ** 2)) for e, t in zip(est, truth)]
    return float(np.sqrt(sum(squared) / len(squared)))


def reference_rpe(est: Trajectory, truth: Trajectory, delta: int) -> float:
    squared = []
    for i in range(len(est) - delta):
        e = np.linalg.inv(est.poses[i].as_matrix()) @ est.poses[i + delta].as_matrix()
        t = np.linalg.inv(truth.poses[i].as_matrix()) @ truth.poses[i + delta].as_matrix()
        error = np.linalg.inv(t) @ e
        squared.append(float(np.sum(error[:3, 3] ** 2)))
    return float(np.sqrt(np.mean(squared)))


def test_ate_matches_reference():
    rng = np.random.default_rng(0)
    for _ in range(50):
        truth = random_trajectory(rng)
        est = perturbed(truth, rng)
        assert ate(est, truth).rmse == pytest.approx(reference_ate(est.positions, truth.positions), abs=1e-12)


def test_rpe_matches_reference():
    rng = np.random.default_rng(1)
    for delta in (1, 3):
        for _ in range(25):
            truth = random_trajectory(rng)
            est = perturbed(truth, rng)
            assert rpe(est, truth, delta).rmse == pytest.approx(reference_rpe(est, truth, delta), abs=1e-12)


def test_identical_trajectories_score_zero():
    truth = random_trajectory(np.random.default_rng(2))
    assert ate(truth, truth).rmse == pytest.approx(0.0, abs=1e-12)
    assert rpe(truth, truth).rmse == pytest.approx(0.0, abs=1e-12)


def test_ate_rigid_invariance():
    rng = np.random.default_rng(3)
    truth = random_trajectory(rng)
    est = perturbed(truth, rng)
    moved = est.transformed(random_pose(rng, scale=5.0))
    assert ate(moved, truth).rmse == pytest.approx(ate(est, truth).rmse, abs=1e-9)


def test_rpe_relative_invariance():
    rng = np.random.default_rng(4)
    truth = random_trajectory(rng)
    est = perturbed(truth, rng)
    moved = est.transformed(random_pose(rng, scale=5.0))
    assert rpe(moved, truth).rmse == pytest.approx(rpe(est, truth).rmse, abs=1e-9)


def test_constant_offset_in_relative_motion():
    # every estimated step overshoots by 1 cm along x
    steps = 10
    truth = Trajectory(np.arange(steps) / 30.0, [RigidTransform(np.eye(3), [0.1 * k, 0.0, 0.0]) for k in range(steps)])
    est = Trajectory(truth.timestamps, [RigidTransform(np.eye(3), [0.11 * k, 0.0, 0.0]) for k in range(steps)])
    assert rpe(est, truth).rmse == pytest.approx(0.01, abs=1e-12)
    assert rpe(est, truth, delta=2).rmse == pytest.approx(0.02, abs=1e-12)


def test_rpe_seconds():
    steps = 10
    truth = Trajectory(np.arange(steps) / 10.0, [RigidTransform(np.eye(3), [0.1 * k, 0.0, 0.0]) for k in range(steps)])
    est = Trajectory(truth.timestamps, [RigidTransform(np.eye(3), [0.11 * k, 0.0, 0.0]) for k in range(steps)])
    assert rpe(est, truth, delta=0.2, unit="seconds").rmse == pytest.approx(0.02, abs=1e-12)
    with pytest.raises(ValueError):
        rpe(est, truth, delta=1, unit="meters")
    with pytest.raises(InsufficientOverlap):
        rpe(est, truth, delta=20)


def test_alignment_recovers_transform():
    rng = np.random.default_rng(5)
    points = rng.normal(size=(20, 3))
    transform = random_pose(rng)
    recovered = umeyama_alignment(points, transform.apply(points))
    np.testing.assert_allclose(recovered.as_matrix(), transform.as_matrix(), atol=1e-9)


def test_planar_alignment_is_proper_rotation():
    rng = np.random.default_rng(6)
    points = np.column_stack([rng.normal(size=(10, 2)), np.zeros(10)])
    transform = random_pose(rng)
    recovered = umeyama_alignment(points, transform.apply(points))
    assert np.linalg.det(recovered.rotation) == pytest.approx(1.0)
    np.testing.assert_allclose(recovered.apply(points), transform.apply(points), atol=1e-9)


def test_degenerate_alignments():
    with pytest.raises(DegenerateAlignment):
        umeyama_alignment(np.zeros((2, 3)), np.zeros((2, 3)))

    line = np.outer(np.arange(5.0), [1.0, 2.0, 3.0])
    with pytest.raises(DegenerateAlignment):
        umeyama_alignment(line, line)

    rng = np.random.default_rng(7)
    points = rng.normal(size=(10, 3))
    with pytest.raises(DegenerateAlignment):
        umeyama_alignment(points, points * [1.0, 1.0, -1.0])


def test_ate_needs_overlap():
    rng = np.random.default_rng(8)
    truth = random_trajectory(rng, count=5)
    shifted = Trajectory(truth.timestamps + 100.0, truth.poses)
    with pytest.raises(InsufficientOverlap):
        ate(shifted, truth)


def test_compare_report_improvements():
    rng = np.random.default_rng(9)
    truth = random_trajectory(rng)
    est = perturbed(truth, rng)
    report = compare_report([("baseline", est, truth), ("same", est, truth), ("perfect", truth, truth)])

    assert report.baseline == "baseline"
    rows = {row.run: row for row in report.rows}
    assert rows["baseline"].ate_improvement == pytest.approx(0.0)
    assert rows["same"].rpe_improvement == pytest.approx(0.0)
    assert rows["perfect"].ate_improvement == pytest.approx(100.0, abs=1e-6)


def test_compare_report_half_error():
    # relative steps overshoot by 20% and 10%, so RPE halves
    steps = 10
    truth_positions = [[0.1 * k, 0.05 * k * k, 0.0] for k in range(steps)]
    truth = Trajectory(np.arange(steps) / 30.0, [RigidTransform(np.eye(3), p) for p in truth_positions])

    def scaled(factor):
        return Trajectory(truth.timestamps, [RigidTransform(np.eye(3), np.multiply(p, factor)) for p in truth_positions])

    report = compare_report([("base", scaled(1.2), truth), ("ours", scaled(1.1), truth)])
    assert report.rows[1].rpe_improvement == pytest.approx(50.0)


def test_zero_baseline_reports_na():
    assert improvement_pct(0.1, 0.0) is None
    assert improvement_pct(float("nan"), 0.1) is None
    report = ComparisonReport("base", [ComparisonRow("base", 0.0, 0.0), ComparisonRow("other", 0.1, 0.2, None, None)])
    assert report.csv_text().splitlines()[2] == "other,0.100000,0.200000,n/a,n/a"


def test_report_csv_and_text(tmp_path):
    rng = np.random.default_rng(12)
    truth = random_trajectory(rng)
    report = compare_report([("baseline", perturbed(truth, rng), truth), ("lambda=5", perturbed(truth, rng, 0.01), truth)])

    lines = report.to_csv(tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == ",".join(REPORT_COLUMNS)
    assert len(lines) == 3
    assert lines[1].startswith("baseline,")

    text = report.render_text()
    assert "lambda=5" in text
    assert "baseline" in text


def test_unknown_baseline():
    truth = random_trajectory(np.random.default_rng(13))
    with pytest.raises(KeyError):
        compare_report([("a", truth, truth)], baseline="b")


def test_trajectory_svg(tmp_path):
    rng = np.random.default_rng(14)
    truth = random_trajectory(rng)
    svg = render_trajectory_svg(perturbed(truth, rng), truth, tmp_path / "plot.svg", title="run")
    assert svg.startswith("<svg")
    assert svg.count("<polyline") == 2
    assert svg.count("<line ") == len(truth)
    assert (tmp_path / "plot.svg").read_text() == svg
