"""
TUM RGB-D sequence ingestion, synthetic sequences and trajectory files.

Sequence layout (as published by the TUM benchmark):

    <root>/depth.txt        timestamp filename       ('#' comments)
    <root>/groundtruth.txt  timestamp tx ty tz qx qy qz qw
    <root>/depth/*.png      16-bit depth, meters = raw / 5000
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from app.bench.base import render_depth
from app.config import TUM_DEPTH_SCALE
from app.errors import DataError, MalformedSequence, ParseError
from app.geom import RigidTransform, UnitQuaternion, exp_so3
from app.models import IntrinsicsConfig, OrbitMotion, SceneSpec
from app.pyramid import DEFAULT_DEPTH_MAX, DepthImage, Intrinsics

try:
    import cv2
    CV2_AVAILABLE = True
except ImportError:
    CV2_AVAILABLE = False

from PIL import Image

logger = logging.getLogger(__name__)

DEFAULT_MAX_DT = 0.02
TRAJECTORY_HEADER = "# timestamp tx ty tz qx qy qz qw"
# written next to synthetic exports; TUM downloads use the Kinect default
INTRINSICS_FILE = "intrinsics.json"


# -----------------------------
# Trajectories
# -----------------------------

@dataclass
class Trajectory:
    """Timestamped poses (camera to world), strictly increasing in time"""
    timestamps: np.ndarray
    poses: List[RigidTransform]

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=float).ravel()
        self.poses = list(self.poses)
        if self.timestamps.shape[0] != len(self.poses):
            raise ValueError(f"{self.timestamps.shape[0]} timestamps for {len(self.poses)} poses")
        if np.any(np.diff(self.timestamps) <= 0):
            raise ValueError("Trajectory timestamps must be strictly increasing")

    def __len__(self) -> int:
        return len(self.poses)

    def __iter__(self) -> Iterator[Tuple[float, RigidTransform]]:
        return iter(zip(self.timestamps.tolist(), self.poses))

    @property
    def positions(self) -> np.ndarray:
        if not self.poses:
            return np.zeros((0, 3))
        return np.array([pose.translation for pose in self.poses])

    def transformed(self, transform: RigidTransform) -> "Trajectory":
        """Every pose moved by transform (applied on the world side)"""
        return Trajectory(self.timestamps, [transform.compose(pose) for pose in self.poses])

    def subset(self, indices: Sequence[int]) -> "Trajectory":
        indices = list(indices)
        return Trajectory(self.timestamps[indices], [self.poses[i] for i in indices])


def save_trajectory(traj: Trajectory, path) -> Path:
    """Write `timestamp tx ty tz qx qy qz qw` lines"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [TRAJECTORY_HEADER]
    for t, pose in traj:
        tx, ty, tz = pose.translation
        qx, qy, qz, qw = pose.quaternion().as_xyzw()
        lines.append(f"{t:.6f} {tx:.9f} {ty:.9f} {tz:.9f} {qx:.9f} {qy:.9f} {qz:.9f} {qw:.9f}")
    path.write_text("\n".join(lines) + "\n")
    return path


def _data_lines(path: Path) -> Iterator[Tuple[int, List[str]]]:
    with open(path) as f:
        for line_number, line in enumerate(f, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            yield line_number, stripped.replace(",", " ").split()


def load_trajectory(path) -> Trajectory:
    """
    Read a TUM trajectory file.

    Raises:
        ParseError: malformed line, non-unit-able quaternion or timestamps
            out of order (carries the line number)
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"Trajectory file not found: {path}")

    timestamps: List[float] = []
    poses: List[RigidTransform] = []
    for line_number, fields in _data_lines(path):
        if len(fields) != 8:
            raise ParseError(f"expected 8 fields, got {len(fields)}", line_number, str(path))
        try:
            values = [float(v) for v in fields]
        except ValueError:
            raise ParseError("non-numeric field", line_number, str(path))
        if not all(math.isfinite(v) for v in values):
            raise ParseError("non-finite field", line_number, str(path))
        if timestamps and values[0] <= timestamps[-1]:
            raise ParseError("timestamps must be strictly increasing", line_number, str(path))
        try:
            q = UnitQuaternion.from_xyzw(values[4:8])
        except ValueError as e:
            raise ParseError(str(e), line_number, str(path))

        timestamps.append(values[0])
        poses.append(RigidTransform.from_quaternion(q, values[1:4]))

    return Trajectory(timestamps, poses)


def associate(first: Sequence[float], second: Sequence[float], max_dt: float = DEFAULT_MAX_DT) -> List[Tuple[int, int]]:
    """
    Greedy nearest-timestamp matching.

    Candidate pairs within max_dt are taken closest first; every entry of
    either list is used at most once. Result is sorted by the first index.
    """
    first = np.asarray(first, dtype=float)
    second = np.asarray(second, dtype=float)
    order = np.argsort(second, kind="stable")
    sorted_second = second[order]

    candidates = []
    for i, t in enumerate(first):
        lo = np.searchsorted(sorted_second, t - max_dt, side="left")
        hi = np.searchsorted(sorted_second, t + max_dt, side="right")
        for k in range(lo, hi):
            candidates.append((abs(sorted_second[k] - t), i, int(order[k])))

    candidates.sort()
    used_first, used_second = set(), set()
    matches = []
    for dt, i, j in candidates:
        if dt > max_dt or i in used_first or j in used_second:
            continue
        used_first.add(i)
        used_second.add(j)
        matches.append((i, j))

    return sorted(matches)


# -----------------------------
# Depth PNG
# -----------------------------

def read_depth_png(path, scale: float = TUM_DEPTH_SCALE) -> np.ndarray:
    """Depth in meters from a 16-bit PNG; 0 stays 0"""
    path = str(path)
    if CV2_AVAILABLE:
        raw = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    else:
        try:
            raw = np.array(Image.open(path))
        except (OSError, ValueError):
            raw = None

    if raw is None:
        raise DataError(f"Unreadable depth image: {path}")
    if raw.ndim != 2 or raw.dtype not in (np.uint16, np.int32, np.int16):
        raise DataError(f"Expected single-channel 16-bit depth in {path}, got {raw.dtype} {raw.shape}")

    return raw.astype(float) / scale


def write_depth_png(path, depths: np.ndarray, scale: float = TUM_DEPTH_SCALE) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    raw = np.nan_to_num(np.asarray(depths, dtype=float), nan=0.0) * scale
    raw = np.clip(np.rint(raw), 0, 65535).astype(np.uint16)

    if CV2_AVAILABLE:
        if not cv2.imwrite(str(path), raw):
            raise DataError(f"Could not write {path}")
    else:
        Image.fromarray(raw).save(path)
    return path


# -----------------------------
# TUM sequences
# -----------------------------

@dataclass
class SequenceIndex:
    """Parsed sequence directory; depth frames are read on demand"""
    root: Path
    depth_entries: List[Tuple[float, Path]]
    groundtruth: Trajectory
    associations: List[Tuple[int, int]]
    intrinsics: Intrinsics
    depth_scale: float = TUM_DEPTH_SCALE
    max_dt: float = DEFAULT_MAX_DT

    def __len__(self) -> int:
        return len(self.associations)

    def load_frames(self, max_frames: Optional[int] = None) -> Tuple[List[Tuple[float, DepthImage, RigidTransform]], int]:
        """
        Read associated depth frames in time order.

        Returns:
            (frames, skipped) where frames are (timestamp, depth, truth pose)
            and skipped counts PNGs that could not be read
        """
        frames = []
        skipped = 0
        for depth_i, truth_j in self.associations:
            if max_frames is not None and len(frames) >= max_frames:
                break
            timestamp, png = self.depth_entries[depth_i]
            try:
                depths = read_depth_png(png, self.depth_scale)
                image = DepthImage(depths, self.intrinsics)
            except (DataError, ValueError) as e:
                skipped += 1
                logger.warning("Skipping frame %.6f: %s", timestamp, e)
                continue
            frames.append((timestamp, image, self.groundtruth.poses[truth_j]))

        if skipped:
            logger.warning("%d depth frame(s) skipped in %s", skipped, self.root)
        return frames, skipped


def _read_depth_list(path: Path, root: Path) -> List[Tuple[float, Path]]:
    entries = []
    for line_number, fields in _data_lines(path):
        if len(fields) < 2:
            raise ParseError("expected `timestamp filename`", line_number, str(path))
        try:
            timestamp = float(fields[0])
        except ValueError:
            raise ParseError("non-numeric timestamp", line_number, str(path))
        entries.append((timestamp, root / fields[1]))
    entries.sort(key=lambda entry: entry[0])
    return entries


def load_tum_sequence(
    root,
    intrinsics: Optional[Intrinsics] = None,
    max_dt: float = DEFAULT_MAX_DT,
    depth_scale: float = TUM_DEPTH_SCALE,
) -> SequenceIndex:
    """
    Index a TUM-layout directory and associate depth with ground truth.

    Raises:
        MalformedSequence: directory, depth.txt or groundtruth.txt missing
        ConfigError: an intrinsics.json next to the lists is invalid
        ParseError: a list file has a malformed line
    """
    root = Path(root)
    if not root.is_dir():
        raise MalformedSequence(f"Sequence directory not found: {root}")
    for required in ("depth.txt", "groundtruth.txt"):
        if not (root / required).exists():
            raise MalformedSequence(f"{root} is missing {required}")

    if intrinsics is None and (root / INTRINSICS_FILE).exists():
        intrinsics = IntrinsicsConfig.from_file(root / INTRINSICS_FILE).build()

    depth_entries = _read_depth_list(root / "depth.txt", root)
    groundtruth = load_trajectory(root / "groundtruth.txt")
    associations = associate([t for t, _ in depth_entries], groundtruth.timestamps, max_dt)

    logger.info(
        "Loaded %s: %d depth frames, %d poses, %d associated",
        root.name, len(depth_entries), len(groundtruth), len(associations),
    )

    return SequenceIndex(
        root=root,
        depth_entries=depth_entries,
        groundtruth=groundtruth,
        associations=associations,
        intrinsics=intrinsics or IntrinsicsConfig.tum_default().build(),
        depth_scale=depth_scale,
        max_dt=max_dt,
    )


# -----------------------------
# Synthetic sequences
# -----------------------------

@dataclass
class SyntheticSequence:
    scene: str
    frames: List[DepthImage]
    truth: Trajectory

    def __len__(self) -> int:
        return len(self.frames)


def orbit_motion(motion: OrbitMotion) -> Tuple[List[float], List[RigidTransform]]:
    """
    Camera poses circling motion.pivot about the vertical axis.

    Frame 0 is the identity; a slow pitch wobble keeps the path out of a
    single plane.
    """
    pivot = np.asarray(motion.pivot, dtype=float)
    timestamps, poses = [], []
    for k in range(motion.frames):
        yaw = math.radians(motion.step_deg * k)
        pitch = math.radians(motion.wobble_deg) * math.sin(2 * math.pi * k / motion.frames)
        rotation = exp_so3([0.0, yaw, 0.0]) @ exp_so3([pitch, 0.0, 0.0])
        timestamps.append(k / motion.frame_rate)
        poses.append(RigidTransform(rotation, pivot - rotation @ pivot))
    return timestamps, poses


def synth_sequence(
    scene: SceneSpec,
    motion: Sequence[RigidTransform],
    intrinsics: Intrinsics,
    timestamps: Optional[Sequence[float]] = None,
    depth_max: float = DEFAULT_DEPTH_MAX,
) -> SyntheticSequence:
    """
    Ray cast one depth frame per camera pose.

    Raises:
        EmptyFrame: a pose sees none of the scene
    """
    if timestamps is None:
        timestamps = [k / 30.0 for k in range(len(motion))]
    frames = [render_depth(scene, pose, intrinsics, depth_max) for pose in motion]
    return SyntheticSequence(scene.name, frames, Trajectory(timestamps, motion))


def write_tum_sequence(sequence: SyntheticSequence, root, depth_scale: float = TUM_DEPTH_SCALE) -> Path:
    """Export a synthetic sequence in the TUM directory layout"""
    root = Path(root)
    (root / "depth").mkdir(parents=True, exist_ok=True)

    lines = ["# depth maps", f"# synthetic scene: {sequence.scene}", "# timestamp filename"]
    for t, frame in zip(sequence.truth.timestamps, sequence.frames):
        name = f"depth/{t:.6f}.png"
        write_depth_png(root / name, frame.depths, depth_scale)
        lines.append(f"{t:.6f} {name}")

    (root / "depth.txt").write_text("\n".join(lines) + "\n")
    save_trajectory(sequence.truth, root / "groundtruth.txt")
    if sequence.frames:
        k = sequence.frames[0].intrinsics
        config = IntrinsicsConfig(width=k.width, height=k.height, fx=k.fx, fy=k.fy, cx=k.cx, cy=k.cy)
        (root / INTRINSICS_FILE).write_text(config.to_json() + "\n")
    logger.info("Wrote %d frames to %s", len(sequence), root)
    return root
