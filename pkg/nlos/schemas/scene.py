"""
Scene schemas: hidden-emitter / wall geometry, target motion and wall frames
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator


class SceneGeometry(BaseModel):
    """Parallel-plane geometry of the hidden emitter and the diffuse wall"""
    standoff_m: float = Field(default=0.25, gt=0.0, description="Plane separation d")
    target_extent_m: float = Field(default=0.03, gt=0.0)
    target_res: int = Field(default=28, ge=1)
    wall_extent_m: float = Field(default=1.0, gt=0.0)
    wall_res: int = Field(default=128, ge=1)
    display_extent_m: float = Field(default=0.06, gt=0.0, description="Side of the region the target moves in")
    canvas_res: int = Field(default=28, ge=1, description="Ground-truth canvas pixels per side")

    model_config = {"frozen": True}

    @model_validator(mode="after")
    def validate_extents(self):
        if self.wall_extent_m < self.target_extent_m:
            raise ValueError('wall_extent_m must be at least target_extent_m')
        if self.display_extent_m < self.target_extent_m:
            raise ValueError('display_extent_m must be at least target_extent_m')
        return self

    @property
    def target_pitch_m(self) -> float:
        return self.target_extent_m / self.target_res

    @property
    def wall_pitch_m(self) -> float:
        return self.wall_extent_m / self.wall_res

    @property
    def canvas_pitch_m(self) -> float:
        return self.display_extent_m / self.canvas_res

    @property
    def pixel_area_m2(self) -> float:
        """Area of one target pixel (the transport weight of unit exitance)"""
        return self.target_pitch_m ** 2

    @property
    def max_horizontal_offset_m(self) -> float:
        """Largest |dx| keeping the target inside the display region"""
        return (self.display_extent_m - self.target_extent_m) / 2.0


class Pose(BaseModel):
    """In-plane offset of the target centre"""
    dx_m: float = 0.0
    dy_m: float = 0.0

    model_config = {"frozen": True}


class TrajectoryKnot(BaseModel):
    t_us: int = Field(..., ge=0)
    pose: Pose


class Trajectory(BaseModel):
    """Piecewise-linear target motion"""
    knots: List[TrajectoryKnot] = []

    @field_validator('knots')
    def validate_knots(cls, v):
        times = [k.t_us for k in v]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError('Trajectory timestamps must be strictly increasing')
        return v

    @classmethod
    def linear(cls, t0_us: int, t1_us: int, start: Pose, end: Pose) -> "Trajectory":
        if t1_us == t0_us:
            return cls(knots=[TrajectoryKnot(t_us=t0_us, pose=start)])
        return cls(knots=[TrajectoryKnot(t_us=t0_us, pose=start), TrajectoryKnot(t_us=t1_us, pose=end)])

    @property
    def t_start(self) -> int:
        return self.knots[0].t_us

    @property
    def t_end(self) -> int:
        return self.knots[-1].t_us

    def pose_at(self, t_us: float) -> Pose:
        """Linear interpolation between knots, clamped outside the knot span"""
        times = np.array([k.t_us for k in self.knots], dtype=np.float64)
        dx = np.array([k.pose.dx_m for k in self.knots])
        dy = np.array([k.pose.dy_m for k in self.knots])
        return Pose(dx_m=float(np.interp(t_us, times, dx)), dy_m=float(np.interp(t_us, times, dy)))


class TrajectoryConfig(BaseModel):
    """Default motion used for dataset generation (horizontal translation)"""
    duration_us: int = Field(default=1_000_000, ge=0)
    frame_rate: float = Field(default=100.0, gt=0.0)
    half_range_m: Optional[float] = Field(default=None, ge=0.0, description="None = display margin")
    vertical_jitter_m: float = Field(default=0.0, ge=0.0)

    def build(self, geometry: SceneGeometry, dy_m: float = 0.0) -> Trajectory:
        half = geometry.max_horizontal_offset_m if self.half_range_m is None else self.half_range_m
        return Trajectory.linear(0, self.duration_us, Pose(dx_m=-half, dy_m=dy_m), Pose(dx_m=half, dy_m=dy_m))


@dataclass(frozen=True, eq=False)
class TargetFrame:
    """Hidden emitter exitance map (unit exitance = 1) at a pose"""
    image: np.ndarray
    pose: Pose = Pose()

    def __post_init__(self):
        image = np.array(self.image, dtype=np.float64)
        if image.ndim != 2 or image.shape[0] != image.shape[1]:
            raise ValueError(f"Target image must be square 2-D, got {image.shape}")
        if image.size and (image.min() < 0.0 or image.max() > 1.0):
            raise ValueError("Target exitance must lie within [0, 1]")
        image.setflags(write=False)
        object.__setattr__(self, "image", image)


@dataclass(frozen=True, eq=False)
class WallFrame:
    """Irradiance on the wall grid at one instant"""
    t_us: int
    image: np.ndarray

    def __post_init__(self):
        image = np.array(self.image, dtype=np.float64)
        if image.ndim != 2:
            raise ValueError(f"Wall image must be 2-D, got {image.shape}")
        if image.size and image.min() < 0.0:
            raise ValueError("Wall irradiance must be nonnegative")
        image.setflags(write=False)
        object.__setattr__(self, "image", image)
        object.__setattr__(self, "t_us", int(self.t_us))

    @property
    def shape(self) -> Tuple[int, int]:
        return tuple(self.image.shape)

    @property
    def total(self) -> float:
        return float(self.image.sum())
