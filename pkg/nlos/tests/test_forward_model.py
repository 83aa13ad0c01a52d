"""
Tests for the diffuse-wall transport model and wall rendering
"""

import math

import numpy as np
import pytest

from core.exceptions import EmptyTrajectory, PoseOutOfBounds
from schemas.scene import Pose, SceneGeometry, TargetFrame, Trajectory
from services.forward_model import (
    captured_fraction_disk,
    captured_fraction_square,
    diffuse_kernel,
    frame_times,
    ground_truth_frame,
    render_video,
    render_wall_frame,
    target_footprint,
    transport_irradiance,
)
from services.targets import block_digit


def _brute_force(image: np.ndarray, geometry: SceneGeometry) -> np.ndarray:
    """Direct double sum of the transport integral over target and wall pixel centres"""
    pitch = geometry.wall_pitch_m
    wall = (np.arange(geometry.wall_res) - (geometry.wall_res - 1) / 2.0) * pitch
    target = (np.arange(geometry.target_res) - (geometry.target_res - 1) / 2.0) * geometry.target_pitch_m
    out = np.zeros((geometry.wall_res, geometry.wall_res))
    for r, wy in enumerate(wall):
        for c, wx in enumerate(wall):
            for i, ty in enumerate(target):
                for j, tx in enumerate(target):
                    out[r, c] += image[i, j] * transport_irradiance((wx - tx) ** 2 + (wy - ty) ** 2, geometry)
    return out


def test_kernel_centre_value():
    kernel = diffuse_kernel(SceneGeometry())
    assert kernel.shape == (128, 128)
    assert kernel[64, 64] == pytest.approx(5.85e-6, rel=1e-3)
    assert kernel[64, 64] == kernel.max()


def test_kernel_captures_half_within_standoff():
    geometry = SceneGeometry(wall_extent_m=1.0, wall_res=256)
    kernel = diffuse_kernel(geometry)
    offsets = (np.arange(256) - 128) * geometry.wall_pitch_m
    r = np.hypot(*np.meshgrid(offsets, offsets))
    captured = kernel[r <= geometry.standoff_m].sum() * geometry.wall_pitch_m ** 2 / geometry.pixel_area_m2
    assert captured_fraction_disk(geometry.standoff_m, geometry.standoff_m) == 0.5
    assert captured == pytest.approx(0.5, rel=0.03)


def test_kernel_flux_matches_square_footprint():
    geometry = SceneGeometry()
    kernel = diffuse_kernel(geometry)
    captured = kernel.sum() * geometry.wall_pitch_m ** 2 / geometry.pixel_area_m2
    assert captured == pytest.approx(captured_fraction_square(0.5, 0.25), rel=0.01)
    # the whole plane receives all of it
    assert captured_fraction_disk(1e6, 0.25) == pytest.approx(1.0)


def test_zero_target_gives_zero_wall():
    frame = render_wall_frame(np.zeros((28, 28)), SceneGeometry())
    assert frame.total == 0.0


def test_single_pixel_is_the_impulse_response():
    geometry = SceneGeometry()
    image = np.zeros((28, 28))
    image[14, 14] = 1.0
    frame = render_wall_frame(image, geometry)
    assert np.unravel_index(np.argmax(frame.image), frame.shape) == (64, 64)
    kernel = diffuse_kernel(geometry)
    np.testing.assert_allclose(frame.image, kernel, rtol=1e-9, atol=1e-12 * kernel.max())


def test_render_matches_brute_force(equal_pitch_geometry, rng):
    image = rng.uniform(0.0, 1.0, (8, 8))
    frame = render_wall_frame(image, equal_pitch_geometry)
    expected = _brute_force(image, equal_pitch_geometry)
    np.testing.assert_allclose(frame.image, expected, rtol=1e-6)


def test_render_is_shift_covariant(equal_pitch_geometry, rng):
    image = rng.uniform(0.0, 1.0, (8, 8))
    pitch = equal_pitch_geometry.wall_pitch_m
    base = render_wall_frame(image, equal_pitch_geometry).image
    shifted = render_wall_frame(TargetFrame(image, Pose(dx_m=2 * pitch)), equal_pitch_geometry).image
    np.testing.assert_allclose(shifted[:, 2:], base[:, :-2], rtol=1e-9, atol=1e-12 * base.max())


def test_render_is_linear(equal_pitch_geometry, rng):
    t1 = rng.uniform(0.0, 1.0, (8, 8))
    t2 = rng.uniform(0.0, 1.0, (8, 8))
    combined = render_wall_frame(0.3 * t1 + 0.5 * t2, equal_pitch_geometry).image
    separate = 0.3 * render_wall_frame(t1, equal_pitch_geometry).image \
        + 0.5 * render_wall_frame(t2, equal_pitch_geometry).image
    np.testing.assert_allclose(combined, separate, rtol=1e-9)
    assert combined.min() >= 0.0


def test_flux_over_wall_matches_analytic_capture():
    geometry = SceneGeometry()
    target = block_digit(8)
    frame = render_wall_frame(target, geometry)
    captured = frame.total * geometry.wall_pitch_m ** 2
    fraction = captured_fraction_square(geometry.wall_extent_m / 2, geometry.standoff_m)
    assert captured / fraction == pytest.approx(target.sum() * geometry.pixel_area_m2, rel=0.05)


def test_pose_out_of_bounds():
    with pytest.raises(PoseOutOfBounds):
        render_wall_frame(TargetFrame(block_digit(1), Pose(dx_m=0.6)), SceneGeometry())
    with pytest.raises(PoseOutOfBounds):
        target_footprint(SceneGeometry(), Pose(dy_m=-0.6))


def test_footprint_covers_placed_target(equal_pitch_geometry):
    rows, cols = target_footprint(equal_pitch_geometry, Pose(dx_m=equal_pitch_geometry.wall_pitch_m))
    assert (rows.start, rows.stop) == (4, 12)
    assert (cols.start, cols.stop) == (5, 13)


def test_frame_times_for_one_second_at_100_fps():
    trajectory = Trajectory.linear(0, 1_000_000, Pose(dx_m=-0.01), Pose(dx_m=0.01))
    times = frame_times(trajectory, 100.0)
    assert len(times) == 101
    assert times[:3] == [0, 10_000, 20_000]
    assert times[-1] == 1_000_000
    dx = [trajectory.pose_at(t).dx_m for t in times]
    np.testing.assert_allclose(np.diff(dx), 0.0002, rtol=1e-9)


def test_empty_trajectory():
    with pytest.raises(EmptyTrajectory):
        frame_times(Trajectory(), 100.0)


def test_single_knot_video_is_static(equal_pitch_geometry, rng):
    trajectory = Trajectory.linear(0, 0, Pose(), Pose())
    frames = render_video(rng.uniform(0.0, 1.0, (8, 8)), trajectory, equal_pitch_geometry, 100.0,
                          duration_us=50_000)
    assert len(frames) == 6
    for frame in frames[1:]:
        np.testing.assert_array_equal(frame.image, frames[0].image)


def test_video_conserves_flux_for_interior_poses():
    geometry = SceneGeometry()
    trajectory = Trajectory.linear(0, 50_000, Pose(dx_m=-0.01), Pose(dx_m=0.01))
    frames = render_video(block_digit(4), trajectory, geometry, 100.0, workers=2)
    assert [f.t_us for f in frames] == [0, 10_000, 20_000, 30_000, 40_000, 50_000]
    for frame in frames:
        assert frame.total == pytest.approx(frames[0].total, rel=1e-2)


def test_ground_truth_is_centred_and_area_preserving():
    geometry = SceneGeometry()
    target = block_digit(0)
    gt = ground_truth_frame(target, Pose(), geometry)
    assert gt.shape == (28, 28)
    assert gt.sum() == pytest.approx(target.sum() / 4, rel=1e-5)
    shifted = ground_truth_frame(target, Pose(dx_m=3 * geometry.canvas_pitch_m), geometry)
    np.testing.assert_allclose(shifted[:, 3:], gt[:, :-3])
    assert not math.isclose(float(np.abs(shifted - gt).sum()), 0.0)
