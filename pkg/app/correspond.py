"""
Correspondence search by normal shooting and the distance histogram.

The histogram is the only statistic the registration loop looks at: its
median (read off the CDF at bin resolution) drives outlier filtering and
the convergence rule.
"""

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from app.errors import AllPairsRejected, EmptyHistogram, NoCorrespondences
from app.geom import RigidTransform
from app.pyramid import OrganizedCloud

logger = logging.getLogger(__name__)

# floor(d / w) must put 0.03 / 0.01 into bin 3
BIN_EPS = 1e-9
MIN_GATE_COS = 1e-3


@dataclass
class CorrespondenceSet:
    """
    Matched pairs in source pixel order.

    source_points are the raw source points p, transformed_points are
    p' = estimate * p at the time of matching, target_points q lie on the
    target surface and distances are |p' - q|.
    """
    source_points: np.ndarray
    transformed_points: np.ndarray
    target_points: np.ndarray
    target_normals: np.ndarray
    distances: np.ndarray
    source_index: np.ndarray
    source_id: Optional[str] = None
    target_id: Optional[str] = None

    def __len__(self) -> int:
        return int(self.distances.shape[0])

    @classmethod
    def from_pairs(cls, source_points, target_points, target_normals, transformed_points=None, **ids) -> "CorrespondenceSet":
        """Build a set from explicit pairs; p' defaults to p"""
        source_points = np.asarray(source_points, dtype=float).reshape(-1, 3)
        transformed = source_points if transformed_points is None else np.asarray(transformed_points, dtype=float).reshape(-1, 3)
        target_points = np.asarray(target_points, dtype=float).reshape(-1, 3)
        return cls(
            source_points=source_points,
            transformed_points=transformed,
            target_points=target_points,
            target_normals=np.asarray(target_normals, dtype=float).reshape(-1, 3),
            distances=np.linalg.norm(transformed - target_points, axis=1),
            source_index=np.arange(source_points.shape[0]),
            **ids,
        )

    def subset(self, mask: np.ndarray) -> "CorrespondenceSet":
        return CorrespondenceSet(
            source_points=self.source_points[mask],
            transformed_points=self.transformed_points[mask],
            target_points=self.target_points[mask],
            target_normals=self.target_normals[mask],
            distances=self.distances[mask],
            source_index=self.source_index[mask],
            source_id=self.source_id,
            target_id=self.target_id,
        )


def _shoot_offsets(step_len: float, max_dist: float) -> np.ndarray:
    """0, +s, -s, +2s, -2s, ... out to max_dist"""
    count = int(math.floor(max_dist / step_len + BIN_EPS))
    offsets = [0.0]
    for k in range(1, count + 1):
        offsets.extend([k * step_len, -k * step_len])
    return np.array(offsets)


def normal_shoot(
    source: OrganizedCloud,
    target: OrganizedCloud,
    seed: RigidTransform,
    max_dist: float,
    step_len: Optional[float] = None,
    normal_gate_deg: Optional[float] = 60.0,
) -> CorrespondenceSet:
    """
    Match every source point with a normal to the target surface.

    Each transformed source point marches along its transformed normal in
    steps of step_len, nearest offsets first in both directions. A sample
    hits when the target pixel it projects to has a normal, the sample
    lies within one step of that pixel's tangent plane, the normals agree
    within normal_gate_deg (None disables the gate) and the pixel point q
    is within max_dist of p'. The pair records q itself and |p' - q|.

    Raises:
        NoCorrespondences: no source point found a match within max_dist
    """
    if step_len is None:
        step_len = max_dist / 50
    if step_len <= 0 or max_dist <= 0:
        raise ValueError("step_len and max_dist must be positive")

    min_cos = MIN_GATE_COS if normal_gate_deg is None else max(math.cos(math.radians(normal_gate_deg)), MIN_GATE_COS)

    usable = (source.valid & source.normal_valid).ravel()
    source_index = np.flatnonzero(usable)
    p = source.points.reshape(-1, 3)[source_index]
    p_moved = seed.apply(p)
    n_moved = seed.rotate(source.normals.reshape(-1, 3)[source_index])

    target_points = target.points.reshape(-1, 3)
    target_normals = target.normals.reshape(-1, 3)
    target_ok = (target.valid & target.normal_valid).ravel()

    hit_index = np.full(source_index.shape[0], -1, dtype=np.int64)
    pending = np.arange(source_index.shape[0])

    for offset in _shoot_offsets(step_len, max_dist):
        if pending.size == 0:
            break

        sample = p_moved[pending] + offset * n_moved[pending]
        flat, inside = target.project(sample)
        candidate = inside & target_ok[flat]

        q = target_points[flat]
        n_q = target_normals[flat]
        height = np.einsum("ij,ij->i", sample - q, n_q)
        cos = np.einsum("ij,ij->i", n_moved[pending], n_q)
        distance = np.linalg.norm(q - p_moved[pending], axis=1)

        accepted = (
            candidate
            & (np.abs(height) <= step_len)
            & (cos >= min_cos)
            & (distance <= max_dist)
        )

        hit_index[pending[accepted]] = flat[accepted]
        pending = pending[~accepted]

    matched = hit_index >= 0
    if not np.any(matched):
        raise NoCorrespondences(f"No correspondences within {max_dist:.3f} m")

    p_moved = p_moved[matched]
    q = target_points[hit_index[matched]]

    logger.debug("normal_shoot: %d/%d source points matched", int(matched.sum()), matched.size)

    return CorrespondenceSet(
        source_points=p[matched],
        transformed_points=p_moved,
        target_points=q,
        target_normals=target_normals[hit_index[matched]],
        distances=np.linalg.norm(q - p_moved, axis=1),
        source_index=source_index[matched],
    )


@dataclass
class DistanceHistogram:
    """Fixed-width bins over [0, d_max] plus an overflow counter"""
    bin_width: float
    bins: np.ndarray
    overflow: int = 0
    cdf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.bins = np.asarray(self.bins, dtype=np.int64)
        self.overflow = int(self.overflow)
        self.cdf = np.cumsum(self.bins)

    @property
    def total(self) -> int:
        return int(self.bins.sum()) + self.overflow

    @property
    def d_max(self) -> float:
        return self.bin_width * self.bins.shape[0]

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.bins.shape[0]) + 0.5) * self.bin_width

    def merge(self, other: "DistanceHistogram") -> "DistanceHistogram":
        if other.bin_width != self.bin_width or other.bins.shape != self.bins.shape:
            raise ValueError("Cannot merge histograms with different binning")
        return DistanceHistogram(self.bin_width, self.bins + other.bins, self.overflow + other.overflow)


def _count_partition(distances: np.ndarray, bin_width: float, n_bins: int, d_max: float) -> DistanceHistogram:
    over = distances > d_max
    index = np.floor(distances[~over] / bin_width + BIN_EPS).astype(np.int64)
    index = np.minimum(index, n_bins - 1)
    return DistanceHistogram(bin_width, np.bincount(index, minlength=n_bins), int(over.sum()))


def histogram_from_distances(
    distances: np.ndarray,
    bin_width: float,
    d_max: float,
    partitions: int = 1,
) -> DistanceHistogram:
    """
    Count distances into bins of bin_width over [0, d_max].

    Partitions are counted independently and merged in partition order;
    integer counts make the result identical for every partition count.
    """
    if bin_width <= 0:
        raise ValueError(f"bin_width must be positive, got {bin_width}")
    distances = np.asarray(distances, dtype=float).ravel()
    n_bins = max(1, int(math.ceil(d_max / bin_width - BIN_EPS)))

    chunks = np.array_split(distances, max(1, partitions))
    if len(chunks) == 1:
        return _count_partition(chunks[0], bin_width, n_bins, d_max)

    with ThreadPoolExecutor(max_workers=min(len(chunks), 8)) as pool:
        parts = list(pool.map(lambda chunk: _count_partition(chunk, bin_width, n_bins, d_max), chunks))

    merged = parts[0]
    for part in parts[1:]:
        merged = merged.merge(part)
    return merged


def build_histogram(c: CorrespondenceSet, bin_width: float, d_max: float, partitions: int = 1) -> DistanceHistogram:
    return histogram_from_distances(c.distances, bin_width, d_max, partitions)


def median_from_cdf(h: DistanceHistogram) -> float:
    """
    Centre of the first bin whose CDF reaches ceil(total / 2).

    Returns d_max when the median falls into the overflow.

    Raises:
        EmptyHistogram: no samples
    """
    total = h.total
    if total == 0:
        raise EmptyHistogram("Median of an empty histogram")

    k = int(np.searchsorted(h.cdf, (total + 1) // 2, side="left"))
    if k >= h.bins.shape[0]:
        return h.d_max
    return (k + 0.5) * h.bin_width


def mad_from_histogram(h: DistanceHistogram, median: float) -> float:
    """Median absolute deviation from median, at bin resolution"""
    in_range = int(h.bins.sum())
    if in_range == 0:
        return 0.0

    deviation = np.abs(h.centers - median)
    order = np.argsort(deviation, kind="stable")
    cumulative = np.cumsum(h.bins[order])
    k = int(np.searchsorted(cumulative, (in_range + 1) // 2, side="left"))
    return float(deviation[order][k])


def default_band(h: DistanceHistogram, median: float, kappa: float = 3.0, min_bins: float = 2.0) -> float:
    return max(min_bins * h.bin_width, kappa * mad_from_histogram(h, median))


def median_filter(c: CorrespondenceSet, median: float, band: float) -> Tuple[CorrespondenceSet, float]:
    """
    Keep pairs whose distance lies within band of the median.

    Returns:
        (kept pairs, kept fraction)

    Raises:
        AllPairsRejected: nothing survived
    """
    if band <= 0:
        raise ValueError(f"band must be positive, got {band}")

    keep = np.abs(c.distances - median) <= band
    kept = int(keep.sum())
    if kept == 0:
        raise AllPairsRejected(f"All {len(c)} pairs outside {median:.4f} +/- {band:.4f} m")

    return c.subset(keep), kept / len(c)


def write_histogram_csv(h: DistanceHistogram, path) -> Path:
    """Dump `bin_lower,count` rows for plotting"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["bin_lower", "count"])
        for k, count in enumerate(h.bins):
            writer.writerow([f"{k * h.bin_width:.6f}", int(count)])
    return path
