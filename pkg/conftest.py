"""
Shared fixtures: small ray-cast scenes at 1/8 Kinect resolution.
"""

import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from app.bench.base import render_depth
from app.bench.registry import get_scene
from app.bench.trials import BENCH_INTRINSICS
from app.geom import RigidTransform
from app.models import IntrinsicsConfig, OrbitMotion, RunConfig, SequenceSource


@pytest.fixture
def intrinsics():
    return BENCH_INTRINSICS


@pytest.fixture
def corner_scene():
    return get_scene("corner")


@pytest.fixture
def corner_depth(corner_scene, intrinsics):
    return render_depth(corner_scene, RigidTransform.identity(), intrinsics)


def small_run_config(tmp_path, frames=4, step_deg=1.0, wobble_deg=1.0, **updates) -> RunConfig:
    """Short synthetic corner orbit at 80x60"""
    source = SequenceSource(
        scene="corner",
        motion=OrbitMotion(frames=frames, step_deg=step_deg, wobble_deg=wobble_deg),
        intrinsics=IntrinsicsConfig(width=80, height=60, fx=65.625, fy=65.625, cx=39.5, cy=29.5),
    )
    return RunConfig(source=source, output_dir=str(tmp_path / "out"), **updates)


@pytest.fixture
def run_config_factory(tmp_path):
    def factory(**kwargs):
        return small_run_config(tmp_path, **kwargs)
    return factory
