"""
Tests for frame-to-frame tracking runs.

Verifies:
- Poses chain from the first ground-truth pose
- Orientation-seeded tracking follows a slow orbit closely
- Output files and summaries are written
- The lambda sweep compares each weight against the baseline
"""

import json

import numpy as np
import pytest

from app.dataset import load_trajectory
from app.errors import DataError
from app.models import ImuMode, SourceKind
from app.odometry import OdometryRunner, load_sequence, run_lambda_sweep


def test_load_synthetic_sequence(run_config_factory):
    sequence = load_sequence(run_config_factory(frames=5))
    assert len(sequence.frames) == 5
    assert sequence.name == "synthetic-corner"
    assert sequence.skipped == 0
    assert len(sequence.truth) == 5


def test_max_frames_truncates(run_config_factory):
    cfg = run_config_factory(frames=5)
    cfg = cfg.model_copy(update={"source": cfg.source.model_copy(update={"max_frames": 3})})
    assert len(load_sequence(cfg).frames) == 3


def test_tracks_slow_orbit(run_config_factory):
    result = OdometryRunner().run(run_config_factory(frames=5))
    truth = result.truth

    assert result.tracking_losses == 0
    assert len(result.iterations) == 4
    np.testing.assert_allclose(result.estimate.poses[0].as_matrix(), truth.poses[0].as_matrix())
    errors = np.linalg.norm(result.estimate.positions - truth.positions, axis=1)
    assert errors.max() < 0.01


def test_unseeded_run_uses_identity_seed(run_config_factory):
    cfg = run_config_factory(frames=3, step_deg=0.0, wobble_deg=0.0)
    cfg = cfg.model_copy(update={"imu": cfg.imu.model_copy(update={"mode": ImuMode.OFF})})
    result = OdometryRunner().run(cfg)
    for pose in result.estimate.poses:
        np.testing.assert_allclose(pose.as_matrix(), np.eye(4), atol=1e-6)


def test_write_outputs(tmp_path, run_config_factory):
    result = OdometryRunner().run(run_config_factory(frames=3))
    paths = result.write_outputs(tmp_path / "out", with_timing=True)

    summary = json.loads(paths["summary"].read_text())
    assert summary["frames"] == 3
    assert summary["registrations"] == 2
    assert summary["ate_rmse_m"] is not None
    assert "mean_ms_per_frame" in summary
    assert len(load_trajectory(paths["trajectory"])) == 3
    assert paths["trace"].exists()


def test_execution_stats(run_config_factory):
    runner = OdometryRunner()
    assert runner.get_execution_stats()["total_runs"] == 0
    runner.run(run_config_factory(frames=3))
    stats = runner.get_execution_stats()
    assert stats["total_runs"] == 1
    assert stats["total_frames"] == 3


def test_lambda_sweep_rows(run_config_factory):
    report, results = run_lambda_sweep(run_config_factory(frames=4), [1.0, 5.0], runner=OdometryRunner())
    assert [row.run for row in report.rows] == ["baseline", "lambda=1", "lambda=5"]
    assert report.baseline == "baseline"
    assert report.rows[0].ate_improvement == pytest.approx(0.0)
    assert len(results) == 3


def test_missing_tum_directory(tmp_path, run_config_factory):
    cfg = run_config_factory(frames=3)
    cfg = cfg.model_copy(update={"source": cfg.source.model_copy(update={"kind": SourceKind.TUM, "path": str(tmp_path / "none")})})
    with pytest.raises(DataError):
        load_sequence(cfg)
