"""
Declarative configuration schemas.

Every run, scene and noise model can be written as JSON and loaded back
through these models; unknown keys are rejected so typos fail loudly.
"""

import json
import math
from enum import Enum
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from app.errors import ConfigError
from app.geom import RigidTransform, UnitQuaternion
from app.pyramid import Intrinsics


Vector3 = Tuple[float, float, float]


class _Schema(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    @classmethod
    def from_file(cls, path):
        """Load and validate a JSON file; raises ConfigError on any problem"""
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"Config file not found: {path}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e})")
        return cls.from_dict(data, source=str(path))

    @classmethod
    def from_dict(cls, data: dict, source: str = "config"):
        try:
            return cls.model_validate(data)
        except ValidationError as e:
            raise ConfigError(f"{source}: {e}")

    def to_json(self) -> str:
        return self.model_dump_json(indent=2, by_alias=True)


# -----------------------------
# Histogram / ICP
# -----------------------------

class HistogramConfig(_Schema):
    """Distance histogram at the finest level; range doubles per coarser level"""
    bins: int = Field(512, ge=1)
    d_max: float = Field(0.5, gt=0)
    band_kappa: float = Field(3.0, gt=0)
    min_band_bins: float = Field(2.0, ge=0)

    @property
    def bin_width(self) -> float:
        return self.d_max / self.bins

    def range_for_level(self, level: int) -> Tuple[float, float]:
        """(bin_width, d_max) for pyramid level (0 = finest)"""
        d_max = self.d_max * (2 ** level)
        return d_max / self.bins, d_max


class IcpMode(str, Enum):
    FIXED_CADENCE = "fixed_cadence"
    MEDIAN_CONVERGENCE = "median_convergence"


class LambdaMode(str, Enum):
    CONSTANT = "constant"
    INVERSE_N = "inverse_n"


class IcpConfig(_Schema):
    """
    Registration settings.

    cadence and max_dist are listed coarse to fine, so cadence[0] is the
    iteration count of the coarsest pyramid level.
    """
    mode: IcpMode = IcpMode.FIXED_CADENCE
    levels: int = Field(3, ge=1)
    cadence: Tuple[int, ...] = (10, 5, 4)
    max_iters_per_level: int = Field(50, ge=1)
    convergence_patience: int = Field(3, ge=1)
    lam: float = Field(5.0, ge=0, alias="lambda")
    lambda_mode: LambdaMode = LambdaMode.CONSTANT
    filter_enabled: bool = True
    histogram: HistogramConfig = HistogramConfig()
    max_dist: Tuple[float, ...] = (0.3, 0.2, 0.1)
    normal_gate_deg: Optional[float] = Field(60.0, gt=0, le=180)
    rcond: float = Field(1e-10, gt=0)
    half_window: int = Field(5, ge=1)
    disc_threshold: float = Field(0.05, gt=0)
    require_full_rank: bool = False
    partitions: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _check_levels(self):
        if len(self.cadence) != self.levels:
            raise ValueError(f"cadence has {len(self.cadence)} entries for {self.levels} levels")
        if len(self.max_dist) != self.levels:
            raise ValueError(f"max_dist has {len(self.max_dist)} entries for {self.levels} levels")
        if any(c < 1 for c in self.cadence):
            raise ValueError("cadence entries must be >= 1")
        if any(d <= 0 for d in self.max_dist):
            raise ValueError("max_dist entries must be > 0")
        return self

    def iterations_for(self, level: int) -> int:
        """Fixed-cadence count for pyramid level (0 = finest)"""
        return self.cadence[self.levels - 1 - level]

    def max_dist_for(self, level: int) -> float:
        return self.max_dist[self.levels - 1 - level]

    def half_window_for(self, level: int) -> int:
        return max(1, int(round(self.half_window / (2 ** level))))

    def with_updates(self, **changes) -> "IcpConfig":
        data = self.model_dump(by_alias=False)
        data.update(changes)
        return IcpConfig.model_validate(data)

    # Presets for the iteration benchmark
    @classmethod
    def baseline(cls) -> "IcpConfig":
        """Unregularized, unfiltered, fixed (10, 5, 4)"""
        return cls(mode=IcpMode.FIXED_CADENCE, cadence=(10, 5, 4), lam=0.0, filter_enabled=False)

    @classmethod
    def seeded_fixed(cls) -> "IcpConfig":
        return cls(mode=IcpMode.FIXED_CADENCE, cadence=(3, 2, 2), lam=5.0, filter_enabled=True)

    @classmethod
    def seeded_median(cls) -> "IcpConfig":
        return cls(mode=IcpMode.MEDIAN_CONVERGENCE, cadence=(3, 2, 2), lam=5.0, filter_enabled=True)


# -----------------------------
# IMU
# -----------------------------

class ImuNoiseModel(_Schema):
    """
    Systematic orientation error, angles in degrees.

    Phases left unset are drawn from phase_seed, so a model file fully
    determines the error curve.
    """
    amp_x: float = Field(3.0, ge=0)
    amp_y: float = Field(3.0, ge=0)
    amp_z: float = Field(10.0, ge=0)
    phase_x: Optional[float] = None
    phase_y: Optional[float] = None
    phase_z: Optional[float] = None
    phase_seed: int = 0
    harmonics: int = Field(1, ge=1)
    random_sigma: float = Field(0.0, ge=0)
    seed: int = 0

    @classmethod
    def zero(cls) -> "ImuNoiseModel":
        return cls(amp_x=0.0, amp_y=0.0, amp_z=0.0)

    @property
    def amplitudes(self) -> np.ndarray:
        """Radians"""
        return np.radians([self.amp_x, self.amp_y, self.amp_z])

    @property
    def phases(self) -> np.ndarray:
        drawn = np.random.default_rng(self.phase_seed).uniform(0.0, 2 * math.pi, size=3)
        given = (self.phase_x, self.phase_y, self.phase_z)
        return np.array([drawn[i] if given[i] is None else given[i] for i in range(3)])

    @property
    def is_zero(self) -> bool:
        return self.amp_x == 0 and self.amp_y == 0 and self.amp_z == 0 and self.random_sigma == 0

    @property
    def bound(self) -> float:
        """Largest geodesic error of the systematic term, radians"""
        return float(np.linalg.norm(self.amplitudes))


class ImuMode(str, Enum):
    OFF = "off"
    GROUND_TRUTH = "ground_truth"
    NOISY = "noisy"


class ImuConfig(_Schema):
    mode: ImuMode = ImuMode.GROUND_TRUTH
    model: ImuNoiseModel = ImuNoiseModel()
    # IMU-to-camera rotation, (w, x, y, z)
    extrinsic: Tuple[float, float, float, float] = (1.0, 0.0, 0.0, 0.0)

    def extrinsic_transform(self) -> RigidTransform:
        return RigidTransform.from_quaternion(UnitQuaternion(*self.extrinsic))


# -----------------------------
# Scenes
# -----------------------------

class PlaneSpec(_Schema):
    """Disk of radius extent centred on point"""
    name: str = "plane"
    point: Vector3
    normal: Vector3
    extent: float = Field(gt=0)

    @model_validator(mode="after")
    def _check_normal(self):
        if np.linalg.norm(self.normal) < 1e-12:
            raise ValueError(f"plane '{self.name}' has a zero normal")
        return self


class BoxSpec(_Schema):
    name: str = "box"
    center: Vector3
    half_extents: Vector3

    @model_validator(mode="after")
    def _check_extents(self):
        if min(self.half_extents) <= 0:
            raise ValueError(f"box '{self.name}' needs positive half extents")
        return self


class SceneSpec(_Schema):
    """Analytic scene in the reference camera frame (x right, y down, z forward)"""
    name: str
    description: str = ""
    planes: List[PlaneSpec] = []
    boxes: List[BoxSpec] = []

    @model_validator(mode="after")
    def _check_primitives(self):
        if not self.planes and not self.boxes:
            raise ValueError(f"scene '{self.name}' has no primitives")
        return self


# -----------------------------
# Runs
# -----------------------------

class IntrinsicsConfig(_Schema):
    width: int = Field(160, ge=1)
    height: int = Field(120, ge=1)
    fx: float = 131.25
    fy: float = 131.25
    cx: float = 79.5
    cy: float = 59.5

    @classmethod
    def tum_default(cls) -> "IntrinsicsConfig":
        return cls(width=640, height=480, fx=525.0, fy=525.0, cx=319.5, cy=239.5)

    def build(self) -> Intrinsics:
        return Intrinsics(self.width, self.height, self.fx, self.fy, self.cx, self.cy)


class OrbitMotion(_Schema):
    """Camera circling a pivot about the vertical axis with a slow pitch wobble"""
    frames: int = Field(30, ge=2)
    step_deg: float = 1.5
    pivot: Vector3 = (0.0, 0.3, 2.4)
    wobble_deg: float = 2.0
    frame_rate: float = Field(30.0, gt=0)


class SourceKind(str, Enum):
    TUM = "tum"
    SYNTHETIC = "synthetic"


class SequenceSource(_Schema):
    kind: SourceKind = SourceKind.SYNTHETIC
    path: Optional[str] = None
    scene: str = "corner"
    motion: OrbitMotion = OrbitMotion()
    intrinsics: Optional[IntrinsicsConfig] = None
    max_dt: float = Field(0.02, gt=0)
    max_frames: Optional[int] = Field(None, ge=2)

    @model_validator(mode="after")
    def _check_path(self):
        if self.kind == SourceKind.TUM and not self.path:
            raise ValueError("a tum source needs a path")
        return self


class RunConfig(_Schema):
    """Everything needed to reproduce one odometry run"""
    source: SequenceSource = SequenceSource()
    icp: IcpConfig = IcpConfig()
    imu: ImuConfig = ImuConfig()
    output_dir: str = "output"
    seed: int = 0
