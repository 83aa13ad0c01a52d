"""
Forward model: irradiance cast on a diffuse wall by a hidden Lambertian emitter

The target plane and the wall are parallel at distance d. A target pixel of
area dA and unit exitance produces, at a wall point at in-plane offset r,

    E(r) = dA * d^2 / (pi * (d^2 + r^2)^2)

Rendering places every target pixel on the nearest wall-grid pixel and
convolves with this kernel over every offset the grid can express.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy.signal import fftconvolve

from core.exceptions import EmptyTrajectory, PoseOutOfBounds
from core.logging_config import get_logger
from schemas.scene import Pose, SceneGeometry, TargetFrame, Trajectory, WallFrame
from services.features import downsample

logger = get_logger("forward_model")

ImageLike = Union[np.ndarray, TargetFrame]


def transport_irradiance(r2, geometry: SceneGeometry):
    """Wall irradiance from one unit-exitance target pixel at squared offset r2"""
    d2 = geometry.standoff_m ** 2
    return geometry.pixel_area_m2 * d2 / (math.pi * (d2 + np.asarray(r2, dtype=np.float64)) ** 2)


def _kernel(offsets: np.ndarray, geometry: SceneGeometry) -> np.ndarray:
    ox, oy = np.meshgrid(offsets, offsets, indexing="xy")
    return transport_irradiance(ox ** 2 + oy ** 2, geometry)


def diffuse_kernel(geometry: SceneGeometry) -> np.ndarray:
    """Wall-sized kernel; index N//2 is the zero offset"""
    n = geometry.wall_res
    return _kernel((np.arange(n) - n // 2) * geometry.wall_pitch_m, geometry)


def transport_kernel(geometry: SceneGeometry) -> np.ndarray:
    """(2N-1)-sized kernel covering every offset between two wall pixels; centre at N-1"""
    n = geometry.wall_res
    return _kernel((np.arange(2 * n - 1) - (n - 1)) * geometry.wall_pitch_m, geometry)


def captured_fraction_disk(radius_m: float, standoff_m: float) -> float:
    """Share of a Lambertian emitter's flux landing within radius of its foot point"""
    return radius_m ** 2 / (standoff_m ** 2 + radius_m ** 2)


def captured_fraction_square(half_side_m: float, standoff_m: float) -> float:
    """Share of a Lambertian emitter's flux landing on a centred square (four corner view factors)"""
    a = half_side_m / standoff_m
    s = math.sqrt(1.0 + a * a)
    return (4.0 / math.pi) * (a / s) * math.atan(a / s)


def _grid_index(coord_m: np.ndarray, pitch_m: float, n: int) -> np.ndarray:
    # nearest centre on a grid symmetric about 0, ties round up
    return np.floor(coord_m / pitch_m + (n - 1) / 2.0 + 0.5).astype(np.int64)


def _pixel_centres(res: int, pitch_m: float) -> np.ndarray:
    return (np.arange(res) - (res - 1) / 2.0) * pitch_m


def _as_target(target: ImageLike, pose: Optional[Pose] = None) -> TargetFrame:
    if isinstance(target, TargetFrame):
        return target if pose is None else TargetFrame(target.image, pose)
    return TargetFrame(np.asarray(target), pose or Pose())


def place_target(target: ImageLike, geometry: SceneGeometry) -> np.ndarray:
    """Wall-grid exitance map: each target pixel summed into its nearest wall pixel"""
    frame = _as_target(target)
    image = frame.image
    if image.shape != (geometry.target_res, geometry.target_res):
        image = downsample(image, geometry.target_res)

    n = geometry.wall_res
    centres = _pixel_centres(geometry.target_res, geometry.target_pitch_m)
    cols = _grid_index(centres + frame.pose.dx_m, geometry.wall_pitch_m, n)
    rows = _grid_index(centres + frame.pose.dy_m, geometry.wall_pitch_m, n)
    if cols.min() < 0 or rows.min() < 0 or cols.max() >= n or rows.max() >= n:
        raise PoseOutOfBounds(frame.pose.dx_m, frame.pose.dy_m)

    placed = np.zeros((n, n), dtype=np.float64)
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    np.add.at(placed, (rr, cc), image)
    return placed


def target_footprint(geometry: SceneGeometry, pose: Pose = Pose()) -> Tuple[slice, slice]:
    """Row and column slices of the wall pixels a placed target touches"""
    n = geometry.wall_res
    centres = _pixel_centres(geometry.target_res, geometry.target_pitch_m)
    cols = _grid_index(centres + pose.dx_m, geometry.wall_pitch_m, n)
    rows = _grid_index(centres + pose.dy_m, geometry.wall_pitch_m, n)
    if cols.min() < 0 or rows.min() < 0 or cols.max() >= n or rows.max() >= n:
        raise PoseOutOfBounds(pose.dx_m, pose.dy_m)
    return slice(int(rows.min()), int(rows.max()) + 1), slice(int(cols.min()), int(cols.max()) + 1)


def render_wall_frame(target: ImageLike, geometry: SceneGeometry, t_us: int = 0,
                      kernel: Optional[np.ndarray] = None) -> WallFrame:
    """Linear (zero-padded) convolution of the placed target with the transport kernel"""
    n = geometry.wall_res
    placed = place_target(target, geometry)
    kernel = transport_kernel(geometry) if kernel is None else kernel
    full = fftconvolve(placed, kernel, mode="full")
    image = np.clip(full[n - 1:2 * n - 1, n - 1:2 * n - 1], 0.0, None)
    return WallFrame(t_us, image)


def frame_times(trajectory: Trajectory, frame_rate: float, duration_us: Optional[int] = None) -> List[int]:
    """Sample instants t0 + round(k * 1e6 / rate) over the knot span (or duration)"""
    if not trajectory.knots:
        raise EmptyTrajectory()
    t0 = trajectory.t_start
    span = duration_us if duration_us is not None else trajectory.t_end - t0
    period = 1e6 / frame_rate
    count = int(math.floor(span / period + 1e-9)) + 1
    return [t0 + int(math.floor(k * period + 0.5)) for k in range(count)]


def render_video(target_image: ImageLike, trajectory: Trajectory, geometry: SceneGeometry,
                 frame_rate: float = 100.0, duration_us: Optional[int] = None,
                 workers: int = 1) -> List[WallFrame]:
    """Wall frames of a target moving along a trajectory, ordered by time"""
    times = frame_times(trajectory, frame_rate, duration_us)
    image = target_image.image if isinstance(target_image, TargetFrame) else np.asarray(target_image)
    kernel = transport_kernel(geometry)

    def render(t_us: int) -> WallFrame:
        frame = TargetFrame(image, trajectory.pose_at(t_us))
        return render_wall_frame(frame, geometry, t_us, kernel)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            frames = list(pool.map(render, times))
    else:
        frames = [render(t) for t in times]

    logger.debug(f"Rendered {len(frames)} wall frames over [{times[0]}, {times[-1]}] us")
    return frames


def ground_truth_size(geometry: SceneGeometry) -> int:
    """Side of the target once resampled to canvas pitch"""
    return max(1, int(round(geometry.target_extent_m / geometry.canvas_pitch_m)))


def ground_truth_frame(target_image: ImageLike, pose: Pose, geometry: SceneGeometry) -> np.ndarray:
    """Target area-averaged to canvas pitch and placed on the display canvas at its pose"""
    image = target_image.image if isinstance(target_image, TargetFrame) else np.asarray(target_image, dtype=np.float64)
    size = ground_truth_size(geometry)
    small = downsample(image, size) if image.shape != (size, size) else image

    c = geometry.canvas_res
    pitch = geometry.canvas_pitch_m
    first = -(size - 1) / 2.0 * pitch
    col0 = int(_grid_index(np.array(first + pose.dx_m), pitch, c))
    row0 = int(_grid_index(np.array(first + pose.dy_m), pitch, c))
    if col0 < 0 or row0 < 0 or col0 + size > c or row0 + size > c:
        raise PoseOutOfBounds(pose.dx_m, pose.dy_m)

    canvas = np.zeros((c, c), dtype=np.float64)
    canvas[row0:row0 + size, col0:col0 + size] = small
    return np.clip(canvas, 0.0, 1.0)
