"""
Angular trials: two ray-cast views of a scene related by a known motion.

The source camera sits at the scene origin. truth maps source camera
coordinates to target camera coordinates, so the target camera pose in the
scene frame is truth^-1 and registration should recover target ~ truth *
source.
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence, Union

import numpy as np

from app.bench.base import render_depth
from app.errors import EmptyFrame
from app.geom import RigidTransform, exp_so3
from app.models import SceneSpec
from app.pyramid import DepthImage, Intrinsics

logger = logging.getLogger(__name__)

MAX_RESAMPLES = 10
SeedLike = Union[int, Sequence[int]]

# Kinect intrinsics at 1/8 resolution (80x60)
BENCH_INTRINSICS = Intrinsics(80, 60, 65.625, 65.625, 39.5, 29.5)


@dataclass(frozen=True, eq=False)
class Trial:
    index: int
    angle_deg: float
    axis: np.ndarray
    truth: RigidTransform
    source: DepthImage
    target: DepthImage

    @property
    def rotation_seed(self) -> RigidTransform:
        """Exact rotation, no translation: what a perfect IMU provides"""
        return RigidTransform(self.truth.rotation, np.zeros(3))


def random_upper_axis(rng: np.random.Generator) -> np.ndarray:
    """Uniform unit axis with a non-positive y component (y points down)"""
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    if axis[1] > 0:
        axis[1] = -axis[1]
    return axis


def make_trial(
    scene: SceneSpec,
    angle_deg: float,
    seed: SeedLike = 0,
    intrinsics: Intrinsics = BENCH_INTRINSICS,
    axis: Optional[Sequence[float]] = None,
    max_translation: float = 0.05,
    index: int = 0,
) -> Trial:
    """
    Build one seeded trial.

    A random axis is redrawn up to MAX_RESAMPLES times when the target view
    misses the scene; an explicit axis is tried once.

    Raises:
        ValueError: angle outside (0, 90) degrees
        EmptyFrame: no usable target view
    """
    if not 0 < angle_deg < 90:
        raise ValueError(f"angle must be in (0, 90) degrees, got {angle_deg}")

    rng = np.random.default_rng(seed)
    source = render_depth(scene, RigidTransform.identity(), intrinsics)
    attempts = 1 if axis is not None else MAX_RESAMPLES + 1

    for attempt in range(attempts):
        if axis is not None:
            trial_axis = np.asarray(axis, dtype=float) / np.linalg.norm(axis)
        else:
            trial_axis = random_upper_axis(rng)
        translation = rng.uniform(0.0, max_translation, size=3)
        truth = RigidTransform(exp_so3(trial_axis * math.radians(angle_deg)), translation)

        try:
            target = render_depth(scene, truth.inverse(), intrinsics)
        except EmptyFrame:
            logger.debug("trial %d: empty target view on attempt %d", index, attempt + 1)
            continue

        return Trial(index, float(angle_deg), trial_axis, truth, source, target)

    raise EmptyFrame(f"No view of '{scene.name}' at {angle_deg} deg after {attempts} attempts")


def trial_generator(
    scene: SceneSpec,
    angle_deg: float,
    seed: int = 0,
    count: int = 1,
    intrinsics: Intrinsics = BENCH_INTRINSICS,
    axis: Optional[Sequence[float]] = None,
) -> Iterator[Trial]:
    """count independent trials; trial i is seeded by (seed, angle, i)"""
    for i in range(count):
        yield make_trial(
            scene, angle_deg, seed=[seed, int(round(angle_deg * 1000)), i],
            intrinsics=intrinsics, axis=axis, index=i,
        )
