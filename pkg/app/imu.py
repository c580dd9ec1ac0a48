"""
Orientation priors: pass-through of measured orientations and a synthetic
systematic-error model.

The error for each axis is a bounded sinusoid of the true Euler XYZ angle,
e_a = amp_a * sin(h * theta_a + phase_a), so the bias is repeatable and
depends only on the true orientation. The error is added to the Euler
angles and the orientation recomposed, so each extracted angle moves by at
most its amplitude. Away from zero pitch the Euler axes are not orthogonal
and the recomposed rotation can land further than |amp| from the truth;
the error vector is then shrunk uniformly until it fits. Next to gimbal
lock the Euler split is arbitrary and the error is applied as a rotation
about the world axes instead.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from app.dataset import Trajectory, save_trajectory
from app.geom import RigidTransform, UnitQuaternion, euler_xyz, exp_so3, from_euler_xyz, geodesic_angle
from app.models import ImuNoiseModel

logger = logging.getLogger(__name__)

BOUND_TOL = 1e-12
SHRINK_STEPS = 40


class SampleSource(str, Enum):
    GROUND_TRUTH = "ground_truth"
    SYNTHETIC_NOISY = "synthetic_noisy"
    EXTERNAL = "external"


@dataclass(frozen=True)
class OrientationSample:
    timestamp: float
    q: UnitQuaternion
    source: SampleSource = SampleSource.GROUND_TRUTH
    gimbal_adjacent: bool = False


def orientation_error(q_true: UnitQuaternion, model: ImuNoiseModel, rng: Optional[np.random.Generator] = None) -> Tuple[np.ndarray, bool]:
    """
    Per-axis Euler error (radians) for one true orientation.

    Returns:
        (error, gimbal_adjacent)
    """
    angles, gimbal_adjacent = euler_xyz(q_true.to_matrix())
    error = model.amplitudes * np.sin(model.harmonics * angles + model.phases)

    if model.random_sigma > 0:
        rng = rng if rng is not None else np.random.default_rng(model.seed)
        error = error + rng.normal(0.0, np.radians(model.random_sigma), size=3)

    return error, gimbal_adjacent


def _shrink_to_bound(rotation: np.ndarray, angles: np.ndarray, error: np.ndarray, bound: float) -> np.ndarray:
    """Largest s in [0, 1] with geodesic(rotation, euler(angles + s*error)) <= bound"""
    lo, hi = 0.0, 1.0
    for _ in range(SHRINK_STEPS):
        mid = 0.5 * (lo + hi)
        if geodesic_angle(rotation, from_euler_xyz(angles + mid * error)) <= bound + BOUND_TOL:
            lo = mid
        else:
            hi = mid
    return from_euler_xyz(angles + lo * error)


def perturb(q_true: UnitQuaternion, model: ImuNoiseModel, rng: Optional[np.random.Generator] = None) -> Tuple[UnitQuaternion, bool]:
    """apply_noise that also reports the gimbal flag"""
    if model.is_zero:
        return q_true, False

    rotation = q_true.to_matrix()
    error, gimbal_adjacent = orientation_error(q_true, model, rng)

    if gimbal_adjacent:
        logger.debug("orientation near gimbal lock; applying error about world axes")
        noisy_matrix = exp_so3(error) @ rotation
    else:
        angles, _ = euler_xyz(rotation)
        noisy_matrix = from_euler_xyz(angles + error)
        if model.random_sigma == 0 and geodesic_angle(rotation, noisy_matrix) > model.bound + BOUND_TOL:
            noisy_matrix = _shrink_to_bound(rotation, angles, error, model.bound)

    noisy = UnitQuaternion.from_matrix(noisy_matrix)
    if np.dot(noisy.as_wxyz(), q_true.as_wxyz()) < 0:
        noisy = UnitQuaternion(-noisy.w, -noisy.x, -noisy.y, -noisy.z)
    return noisy, gimbal_adjacent


def apply_noise(q_true: UnitQuaternion, model: ImuNoiseModel, rng: Optional[np.random.Generator] = None) -> UnitQuaternion:
    """
    Perturb a true orientation with the model's systematic error.

    A zero model returns q_true itself. The Gaussian term, when enabled,
    draws from rng (or a generator seeded with model.seed) and is not held
    to the amplitude bound.
    """
    return perturb(q_true, model, rng)[0]


def stream_from_trajectory(traj: Trajectory, model: Optional[ImuNoiseModel] = None) -> List[OrientationSample]:
    """One orientation sample per pose, noisy when a model is given"""
    if len(traj) == 0:
        raise ValueError("Cannot build an orientation stream from an empty trajectory")

    if model is None:
        return [
            OrientationSample(t, pose.quaternion(), SampleSource.GROUND_TRUTH)
            for t, pose in traj
        ]

    rng = np.random.default_rng(model.seed)
    samples = []
    for t, pose in traj:
        q, gimbal_adjacent = perturb(pose.quaternion(), model, rng)
        samples.append(OrientationSample(t, q, SampleSource.SYNTHETIC_NOISY, gimbal_adjacent))
    return samples


def samples_to_trajectory(samples: Sequence[OrientationSample], truth: Trajectory) -> Trajectory:
    """Orientations from samples, translations copied from truth"""
    if len(samples) != len(truth):
        raise ValueError(f"{len(samples)} samples for {len(truth)} poses")
    poses = [
        RigidTransform.from_quaternion(sample.q, pose.translation)
        for sample, (_, pose) in zip(samples, truth)
    ]
    return Trajectory([s.timestamp for s in samples], poses)


def write_orientation_file(samples: Sequence[OrientationSample], truth: Trajectory, path) -> Path:
    """TUM ground-truth format with the sample orientations"""
    return save_trajectory(samples_to_trajectory(samples, truth), path)
