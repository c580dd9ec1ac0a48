"""
Scene primitives and the depth ray caster.

Each primitive answers one question: along which ray parameter t does a
ray first hit it. Rays through pixel (u, v) are ((u-cx)/fx, (v-cy)/fy, 1)
in the camera frame, so the hit parameter is directly the depth.
"""

from abc import ABC, abstractmethod
from typing import List

import numpy as np

from app.errors import EmptyFrame
from app.geom import RigidTransform
from app.models import SceneSpec
from app.pyramid import DEFAULT_DEPTH_MAX, DepthImage, Intrinsics

MIN_HIT = 1e-9


class Primitive(ABC):
    """Analytic surface that can be ray cast"""

    name: str = "primitive"

    @abstractmethod
    def intersect(self, origin: np.ndarray, directions: np.ndarray) -> np.ndarray:
        """
        First hit parameter per ray.

        Args:
            origin: shared ray origin (3,)
            directions: (..., 3) ray directions, not necessarily unit

        Returns:
            (...) array of t > 0, np.inf where the ray misses
        """

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.name}>"


class Plane(Primitive):
    """Disk of radius extent around point"""

    def __init__(self, point, normal, extent: float, name: str = "plane"):
        self.point = np.asarray(point, dtype=float)
        self.normal = np.asarray(normal, dtype=float) / np.linalg.norm(normal)
        self.extent = float(extent)
        self.name = name

    def intersect(self, origin, directions):
        denom = directions @ self.normal
        facing = np.abs(denom) > 1e-12
        t = np.where(facing, float((self.point - origin) @ self.normal) / np.where(facing, denom, 1.0), 0.0)
        hit = origin + t[..., None] * directions
        inside = np.linalg.norm(hit - self.point, axis=-1) <= self.extent
        return np.where(facing & (t > MIN_HIT) & inside, t, np.inf)


class Box(Primitive):
    """Axis-aligned box; rays starting inside hit the far wall"""

    def __init__(self, center, half_extents, name: str = "box"):
        self.center = np.asarray(center, dtype=float)
        self.half_extents = np.asarray(half_extents, dtype=float)
        self.name = name

    def intersect(self, origin, directions):
        lower = self.center - self.half_extents
        upper = self.center + self.half_extents
        t_near = np.full(directions.shape[:-1], -np.inf)
        t_far = np.full(directions.shape[:-1], np.inf)

        for axis in range(3):
            d = directions[..., axis]
            moving = d != 0
            safe = np.where(moving, d, 1.0)
            t1 = (lower[axis] - origin[axis]) / safe
            t2 = (upper[axis] - origin[axis]) / safe
            inside_slab = lower[axis] <= origin[axis] <= upper[axis]
            t_near = np.where(moving, np.maximum(t_near, np.minimum(t1, t2)), t_near if inside_slab else np.inf)
            t_far = np.where(moving, np.minimum(t_far, np.maximum(t1, t2)), t_far if inside_slab else -np.inf)

        hit = (t_far >= t_near) & (t_far > MIN_HIT)
        t = np.where(t_near > MIN_HIT, t_near, t_far)
        return np.where(hit, t, np.inf)


def build_primitives(scene: SceneSpec) -> List[Primitive]:
    primitives: List[Primitive] = [
        Plane(p.point, p.normal, p.extent, p.name) for p in scene.planes
    ]
    primitives.extend(Box(b.center, b.half_extents, b.name) for b in scene.boxes)
    return primitives


def render_depth(
    scene: SceneSpec,
    pose: RigidTransform,
    intrinsics: Intrinsics,
    depth_max: float = DEFAULT_DEPTH_MAX,
) -> DepthImage:
    """
    Ray cast a depth image from a camera at pose (camera to scene frame).

    Hits beyond depth_max are dropped.

    Raises:
        EmptyFrame: no pixel sees the scene
    """
    intrinsics.validate()
    directions = intrinsics.pixel_rays() @ pose.rotation.T
    origin = np.asarray(pose.translation)

    depth = np.full(directions.shape[:-1], np.inf)
    for primitive in build_primitives(scene):
        depth = np.minimum(depth, primitive.intersect(origin, directions))

    depth = np.where(depth <= depth_max, depth, 0.0)
    if not np.any(depth > 0):
        raise EmptyFrame(f"Scene '{scene.name}' is not visible from {pose!r}")

    return DepthImage(depth, intrinsics, depth_max)
