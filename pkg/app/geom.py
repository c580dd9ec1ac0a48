"""
Rotation and rigid-transform algebra shared by every other module.

Conventions:
- Camera frames are x right, y down, z forward.
- RigidTransform T maps points from its source frame to its target frame:
  T(p) = R p + t. compose(A, B) applies B first, then A.
- Euler angles are intrinsic X-Y-Z: R = Rx(a) @ Ry(b) @ Rz(c). To first order
  this is I + [(a, b, c)]x, which is the layout of small_angle_transform, so
  (alpha, beta, gamma) of a TwistParams and Euler XYZ angles share one naming.
- Quaternions are scalar-first (w, x, y, z) in this package; scipy and the
  TUM file format are scalar-last and converted at the boundary.
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np
from scipy.linalg import polar
from scipy.spatial.transform import Rotation

from app.errors import DegenerateRotation

ORTHONORMAL_TOL = 1e-6
SMALL_ANGLE_LIMIT = 0.2  # radians
GIMBAL_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class UnitQuaternion:
    """Orientation as a unit quaternion (scalar first)"""
    w: float
    x: float
    y: float
    z: float

    def __post_init__(self):
        components = np.array([self.w, self.x, self.y, self.z], dtype=float)
        norm = float(np.linalg.norm(components))
        if not np.all(np.isfinite(components)) or norm == 0.0:
            raise ValueError(f"Not a valid quaternion: {components.tolist()}")

        if norm != 1.0:
            components = components / norm
            object.__setattr__(self, "w", float(components[0]))
            object.__setattr__(self, "x", float(components[1]))
            object.__setattr__(self, "y", float(components[2]))
            object.__setattr__(self, "z", float(components[3]))

    @classmethod
    def identity(cls) -> "UnitQuaternion":
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_xyzw(cls, xyzw: Sequence[float]) -> "UnitQuaternion":
        x, y, z, w = (float(v) for v in xyzw)
        return cls(w, x, y, z)

    @classmethod
    def from_matrix(cls, rotation: np.ndarray) -> "UnitQuaternion":
        return cls.from_xyzw(Rotation.from_matrix(np.asarray(rotation, dtype=float)).as_quat())

    @classmethod
    def from_rotation_vector(cls, rotvec: Sequence[float]) -> "UnitQuaternion":
        return cls.from_xyzw(Rotation.from_rotvec(np.asarray(rotvec, dtype=float)).as_quat())

    def as_wxyz(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    def as_xyzw(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.w])

    def to_matrix(self) -> np.ndarray:
        return Rotation.from_quat(self.as_xyzw()).as_matrix()

    def is_same_rotation(self, other: "UnitQuaternion", tol: float = 1e-9) -> bool:
        """q and -q describe the same rotation"""
        dot = abs(float(np.dot(self.as_wxyz(), other.as_wxyz())))
        return 1.0 - min(dot, 1.0) <= tol

    def __eq__(self, other) -> bool:
        if not isinstance(other, UnitQuaternion):
            return NotImplemented
        return self.is_same_rotation(other)

    __hash__ = None

    def __repr__(self) -> str:
        return f"UnitQuaternion(w={self.w:.9f}, x={self.x:.9f}, y={self.y:.9f}, z={self.z:.9f})"


def _frozen_array(values, shape: Tuple[int, ...]) -> np.ndarray:
    array = np.array(values, dtype=float).reshape(shape)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Element of SE(3): rotation (3x3, det +1) and translation (meters)"""
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rotation = _frozen_array(self.rotation, (3, 3))
        translation = _frozen_array(self.translation, (3,))

        if not (np.all(np.isfinite(rotation)) and np.all(np.isfinite(translation))):
            raise DegenerateRotation("Transform contains non-finite values")
        if np.abs(rotation.T @ rotation - np.eye(3)).max() > ORTHONORMAL_TOL or np.linalg.det(rotation) <= 0:
            raise DegenerateRotation("Rotation block is not orthonormal with det +1")

        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "RigidTransform":
        matrix = np.asarray(matrix, dtype=float)
        return cls(matrix[:3, :3], matrix[:3, 3])

    @classmethod
    def from_quaternion(cls, q: UnitQuaternion, translation: Sequence[float] = (0.0, 0.0, 0.0)) -> "RigidTransform":
        return cls(q.to_matrix(), translation)

    @classmethod
    def from_rotation_vector(cls, rotvec: Sequence[float], translation: Sequence[float] = (0.0, 0.0, 0.0)) -> "RigidTransform":
        return cls(exp_so3(rotvec), translation)

    def as_matrix(self) -> np.ndarray:
        matrix = np.eye(4)
        matrix[:3, :3] = self.rotation
        matrix[:3, 3] = self.translation
        return matrix

    def quaternion(self) -> UnitQuaternion:
        return UnitQuaternion.from_matrix(self.rotation)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other"""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self) -> "RigidTransform":
        rotation_t = self.rotation.T
        return RigidTransform(rotation_t, -(rotation_t @ self.translation))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Rotate then translate; accepts (3,) or (..., 3)"""
        points = np.asarray(points, dtype=float)
        return points @ self.rotation.T + self.translation

    def rotate(self, vectors: np.ndarray) -> np.ndarray:
        return np.asarray(vectors, dtype=float) @ self.rotation.T

    def rotation_angle(self) -> float:
        return geodesic_angle(np.eye(3), self.rotation)

    def __repr__(self) -> str:
        angle = math.degrees(self.rotation_angle())
        return f"<RigidTransform {angle:.4f} deg, t={np.round(self.translation, 6).tolist()}>"


@dataclass(frozen=True)
class TwistParams:
    """
    Six-parameter increment x = (alpha, beta, gamma, tx, ty, tz).

    Angles are radians about X, Y, Z; translation is meters.
    """
    alpha: float = 0.0
    beta: float = 0.0
    gamma: float = 0.0
    tx: float = 0.0
    ty: float = 0.0
    tz: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in self.as_vector()):
            raise ValueError(f"TwistParams must be finite: {self.as_vector().tolist()}")

    @classmethod
    def zero(cls) -> "TwistParams":
        return cls()

    @classmethod
    def from_vector(cls, vector: Sequence[float]) -> "TwistParams":
        values = [float(v) for v in vector]
        if len(values) != 6:
            raise ValueError(f"Expected 6 parameters, got {len(values)}")
        return cls(*values)

    def as_vector(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.gamma, self.tx, self.ty, self.tz])

    @property
    def rotation_vector(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, self.gamma])

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.tx, self.ty, self.tz])

    @property
    def small_angle_valid(self) -> bool:
        """Diagnostic only; large angles are still returned"""
        return max(abs(self.alpha), abs(self.beta), abs(self.gamma)) < SMALL_ANGLE_LIMIT


def small_angle_transform(x: TwistParams) -> np.ndarray:
    """First-order transform matrix for small angles (not orthonormal)"""
    a, b, g = x.alpha, x.beta, x.gamma
    return np.array([
        [1.0, -g, b, x.tx],
        [g, 1.0, -a, x.ty],
        [-b, a, 1.0, x.tz],
        [0.0, 0.0, 0.0, 1.0],
    ])


def orthonormalize(matrix: np.ndarray) -> RigidTransform:
    """
    Project the rotation block of a 4x4 matrix onto SO(3).

    Uses the unitary factor of the polar decomposition, which is the
    Frobenius-nearest orthonormal matrix. Translation is copied through.

    Raises:
        DegenerateRotation: block is singular, reflecting or non-finite
    """
    matrix = np.asarray(matrix, dtype=float)
    block = matrix[:3, :3]

    if not np.all(np.isfinite(matrix)):
        raise DegenerateRotation("Matrix contains non-finite values")

    singular_values = np.linalg.svd(block, compute_uv=False)
    if singular_values[-1] <= 1e-12 * max(singular_values[0], 1e-300) or np.linalg.det(block) <= 0:
        raise DegenerateRotation(f"Rotation block is singular or reflecting (det={np.linalg.det(block):.3e})")

    unitary, _ = polar(block)
    return RigidTransform(unitary, matrix[:3, 3])


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    return a.compose(b)


def inverse(t: RigidTransform) -> RigidTransform:
    return t.inverse()


def apply_to_point(t: RigidTransform, point: Sequence[float]) -> np.ndarray:
    return t.apply(np.asarray(point, dtype=float))


def exp_so3(rotvec: Sequence[float]) -> np.ndarray:
    return Rotation.from_rotvec(np.asarray(rotvec, dtype=float)).as_matrix()


def log_so3(rotation: np.ndarray) -> np.ndarray:
    return Rotation.from_matrix(np.asarray(rotation, dtype=float)).as_rotvec()


def geodesic_angle(rotation_a: np.ndarray, rotation_b: np.ndarray) -> float:
    """Angle (radians) of the rotation taking a onto b"""
    relative = np.asarray(rotation_a, dtype=float).T @ np.asarray(rotation_b, dtype=float)
    return float(Rotation.from_matrix(relative).magnitude())


def quaternion_to_matrix(q: UnitQuaternion) -> np.ndarray:
    return q.to_matrix()


def matrix_to_quaternion(rotation: np.ndarray) -> UnitQuaternion:
    return UnitQuaternion.from_matrix(rotation)


def euler_xyz(rotation: np.ndarray) -> Tuple[np.ndarray, bool]:
    """
    Intrinsic X-Y-Z angles of a rotation matrix.

    Returns:
        (angles, gimbal_adjacent) where gimbal_adjacent flags |pitch| within
        GIMBAL_TOL of pi/2. Angles are still returned in that case but the
        split between X and Z is arbitrary.
    """
    with warnings.catch_warnings():
        # scipy warns on gimbal lock; we report it through the flag
        warnings.simplefilter("ignore", UserWarning)
        angles = Rotation.from_matrix(np.asarray(rotation, dtype=float)).as_euler("XYZ")

    gimbal_adjacent = abs(abs(angles[1]) - math.pi / 2) < GIMBAL_TOL
    return angles, gimbal_adjacent


def from_euler_xyz(angles: Sequence[float]) -> np.ndarray:
    return Rotation.from_euler("XYZ", np.asarray(angles, dtype=float)).as_matrix()


def look_at(eye: Sequence[float], target: Sequence[float], down: Sequence[float] = (0.0, 1.0, 0.0)) -> RigidTransform:
    """
    Camera-to-world pose of a camera at eye looking at target.

    down is the world direction that should appear as +y in the image.
    """
    eye = np.asarray(eye, dtype=float)
    forward = np.asarray(target, dtype=float) - eye
    forward /= np.linalg.norm(forward)

    right = np.cross(np.asarray(down, dtype=float), forward)
    norm = np.linalg.norm(right)
    if norm < 1e-9:
        raise ValueError("look_at: view direction is parallel to the down vector")
    right /= norm
    image_down = np.cross(forward, right)

    return RigidTransform(np.column_stack([right, image_down, forward]), eye)
