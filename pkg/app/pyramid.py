"""
Depth images, organized point clouds and the coarse-to-fine pyramid.

Normals come from integral images of the back-projected points: for every
pixel the summed points right of it minus the summed points left of it give
a smoothed horizontal tangent, below minus above a vertical one, and the
normal is their cross product turned toward the camera.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from app.errors import BadIntrinsics

try:
    import cv2
    CV2_AVAILABLE = True
except ImportError:
    CV2_AVAILABLE = False

logger = logging.getLogger(__name__)

DEFAULT_DEPTH_MAX = 6.0
REFERENCE_FOCAL = 525.0


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole camera; pixel centres at integer coordinates"""
    width: int
    height: int
    fx: float
    fy: float
    cx: float
    cy: float

    def validate(self):
        if not (self.fx > 0 and self.fy > 0):
            raise BadIntrinsics(f"Focal lengths must be positive (fx={self.fx}, fy={self.fy})")
        if self.width < 1 or self.height < 1:
            raise BadIntrinsics(f"Image size must be positive ({self.width}x{self.height})")

    def scaled(self) -> "Intrinsics":
        """Intrinsics of the half-resolution image built from 2x2 blocks"""
        return Intrinsics(
            width=math.ceil(self.width / 2),
            height=math.ceil(self.height / 2),
            fx=self.fx / 2,
            fy=self.fy / 2,
            cx=(self.cx - 0.5) / 2,
            cy=(self.cy - 0.5) / 2,
        )

    def pixel_rays(self) -> np.ndarray:
        """(H, W, 3) rays with unit z through every pixel centre"""
        u, v = np.meshgrid(np.arange(self.width, dtype=float), np.arange(self.height, dtype=float))
        return np.stack([(u - self.cx) / self.fx, (v - self.cy) / self.fy, np.ones_like(u)], axis=-1)


@dataclass
class DepthImage:
    """Depth in meters, shape (height, width); 0 or NaN marks missing data"""
    depths: np.ndarray
    intrinsics: Intrinsics
    depth_max: float = DEFAULT_DEPTH_MAX

    def __post_init__(self):
        depths = np.asarray(self.depths, dtype=float)
        expected = (self.intrinsics.height, self.intrinsics.width)
        if depths.ndim == 1 and depths.size == expected[0] * expected[1]:
            depths = depths.reshape(expected)
        if depths.shape != expected:
            raise ValueError(f"Depth array shape {depths.shape} does not match intrinsics {expected}")
        self.depths = depths

    @property
    def width(self) -> int:
        return self.intrinsics.width

    @property
    def height(self) -> int:
        return self.intrinsics.height

    def valid_mask(self) -> np.ndarray:
        d = self.depths
        with np.errstate(invalid="ignore"):
            return np.isfinite(d) & (d > 0) & (d <= self.depth_max)


@dataclass
class OrganizedCloud:
    """
    Per-pixel points and normals on the image grid.

    Invalid points are stored as zeros; check `valid` / `normal_valid`.
    """
    points: np.ndarray
    valid: np.ndarray
    intrinsics: Intrinsics
    normals: Optional[np.ndarray] = None
    normal_valid: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.normals is None:
            self.normals = np.zeros_like(self.points)
        if self.normal_valid is None:
            self.normal_valid = np.zeros(self.valid.shape, dtype=bool)

    @property
    def width(self) -> int:
        return self.intrinsics.width

    @property
    def height(self) -> int:
        return self.intrinsics.height

    @property
    def depths(self) -> np.ndarray:
        return self.points[..., 2]

    def with_normals(self, normals: np.ndarray, normal_valid: np.ndarray) -> "OrganizedCloud":
        return replace(self, normals=normals, normal_valid=normal_valid & self.valid)

    def project(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Pinhole projection onto this cloud's grid.

        Returns:
            (flat_index, inside): nearest-pixel row-major index and a mask of
            points that land inside the image in front of the camera.
        """
        k = self.intrinsics
        points = np.asarray(points, dtype=float)
        z = points[..., 2]
        in_front = z > 1e-9
        safe_z = np.where(in_front, z, 1.0)
        u = np.rint(k.fx * points[..., 0] / safe_z + k.cx)
        v = np.rint(k.fy * points[..., 1] / safe_z + k.cy)
        inside = in_front & (u >= 0) & (u < k.width) & (v >= 0) & (v < k.height)
        flat = np.where(inside, v * k.width + u, 0).astype(np.int64)
        return flat, inside


@dataclass
class CloudPyramid:
    """Clouds ordered finest first"""
    levels: List[OrganizedCloud] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.levels)

    def __getitem__(self, level: int) -> OrganizedCloud:
        return self.levels[level]

    @property
    def finest(self) -> OrganizedCloud:
        return self.levels[0]


def backproject(depth: DepthImage) -> OrganizedCloud:
    """
    Lift every valid depth pixel to a 3D point.

    Raises:
        BadIntrinsics: fx or fy is not positive
    """
    depth.intrinsics.validate()
    valid = depth.valid_mask()
    z = np.where(valid, depth.depths, 0.0)
    points = depth.intrinsics.pixel_rays() * z[..., None]
    return OrganizedCloud(points=points, valid=valid, intrinsics=depth.intrinsics)


def _integral(image: np.ndarray) -> np.ndarray:
    """Summed-area table with a leading zero row and column"""
    image = np.ascontiguousarray(image, dtype=np.float64)
    if CV2_AVAILABLE:
        return cv2.integral(image, sdepth=cv2.CV_64F)
    table = np.zeros((image.shape[0] + 1, image.shape[1] + 1))
    table[1:, 1:] = image.cumsum(axis=0).cumsum(axis=1)
    return table


def _box(table: np.ndarray, r0, r1, c0, c1) -> np.ndarray:
    """Sum over inclusive rows r0..r1 and columns c0..c1"""
    return table[r1 + 1, c1 + 1] - table[r0, c1 + 1] - table[r1 + 1, c0] + table[r0, c0]


def discontinuity_threshold(intrinsics: Intrinsics, disc_threshold: float) -> float:
    """Jump threshold scaled to the pixel footprint of a 525 px focal length"""
    return disc_threshold * max(1.0, REFERENCE_FOCAL / intrinsics.fx)


def estimate_normals(cloud: OrganizedCloud, half_window: int, disc_threshold: float = 0.05) -> OrganizedCloud:
    """
    Fill normals from integral images over a (2r+1) window.

    Pixels within half_window of the border, pixels whose window holds an
    invalid point, and pixels whose window spans a depth jump larger than
    the threshold are left without a normal.
    """
    r = int(half_window)
    h, w = cloud.valid.shape
    normals = np.zeros((h, w, 3))
    normal_valid = np.zeros((h, w), dtype=bool)

    if h <= 2 * r or w <= 2 * r:
        return cloud.with_normals(normals, normal_valid)

    z = cloud.depths
    threshold = discontinuity_threshold(cloud.intrinsics, disc_threshold)
    jump_h = np.zeros((h, w))
    jump_v = np.zeros((h, w))
    jump_h[:, :-1] = np.abs(np.diff(z, axis=1)) > threshold
    jump_v[:-1, :] = np.abs(np.diff(z, axis=0)) > threshold

    count_table = _integral(cloud.valid.astype(float))
    jump_h_table = _integral(jump_h)
    jump_v_table = _integral(jump_v)
    point_tables = [_integral(cloud.points[..., i]) for i in range(3)]

    v, u = np.mgrid[r:h - r, r:w - r]

    full = _box(count_table, v - r, v + r, u - r, u + r) == (2 * r + 1) ** 2
    smooth = (
        (_box(jump_h_table, v - r, v + r, u - r, u + r - 1) == 0)
        & (_box(jump_v_table, v - r, v + r - 1, u - r, u + r) == 0)
    )

    tangent_h = np.stack([
        _box(t, v - r, v + r, u + 1, u + r) - _box(t, v - r, v + r, u - r, u - 1) for t in point_tables
    ], axis=-1)
    tangent_v = np.stack([
        _box(t, v + 1, v + r, u - r, u + r) - _box(t, v - r, v - 1, u - r, u + r) for t in point_tables
    ], axis=-1)

    n = np.cross(tangent_h, tangent_v)
    norm = np.linalg.norm(n, axis=-1)
    ok = full & smooth & (norm > 1e-12)
    n = n / np.where(ok, norm, 1.0)[..., None]

    # face the camera
    facing = np.einsum("...i,...i->...", n, cloud.points[r:h - r, r:w - r])
    n = np.where((facing > 0)[..., None], -n, n)

    normals[r:h - r, r:w - r] = np.where(ok[..., None], n, 0.0)
    normal_valid[r:h - r, r:w - r] = ok

    return cloud.with_normals(normals, normal_valid)


def downsample_depth(depths: np.ndarray) -> np.ndarray:
    """
    Half-resolution depth: lower median of the valid depths in each 2x2 block.

    Blocks with no valid child stay invalid (0). Odd sizes are padded.
    """
    h, w = depths.shape
    padded = np.full((h + h % 2, w + w % 2), np.nan)
    padded[:h, :w] = depths
    padded[~(padded > 0)] = np.nan

    blocks = padded.reshape(padded.shape[0] // 2, 2, padded.shape[1] // 2, 2).transpose(0, 2, 1, 3)
    blocks = blocks.reshape(blocks.shape[0], blocks.shape[1], 4)

    count = np.sum(np.isfinite(blocks), axis=-1)
    ordered = np.sort(np.where(np.isfinite(blocks), blocks, np.inf), axis=-1)
    pick = np.maximum(count - 1, 0) // 2
    median = np.take_along_axis(ordered, pick[..., None], axis=-1)[..., 0]
    return np.where(count > 0, median, 0.0)


def build_pyramid(
    depth: DepthImage,
    levels: int = 3,
    half_window: int = 5,
    disc_threshold: float = 0.05,
) -> CloudPyramid:
    """
    Build `levels` clouds, finest first, with normals at every level.

    half_window applies to the finest level and halves per coarser level
    (never below 1).
    """
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")

    clouds = []
    current = depth
    for level in range(levels):
        if level > 0:
            masked = np.where(current.valid_mask(), current.depths, 0.0)
            current = DepthImage(downsample_depth(masked), current.intrinsics.scaled(), current.depth_max)
        window = max(1, int(round(half_window / (2 ** level))))
        cloud = estimate_normals(backproject(current), window, disc_threshold)
        clouds.append(cloud)
        logger.debug(
            "pyramid level %d: %dx%d, %d points, %d normals",
            level, cloud.width, cloud.height, int(cloud.valid.sum()), int(cloud.normal_valid.sum()),
        )

    return CloudPyramid(clouds)
