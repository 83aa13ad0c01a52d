"""
Scene commands: transport kernel and wall rendering
"""

from pathlib import Path
from typing import Optional

import numpy as np
import typer

from cli.context import emit, state
from core.logging_config import get_logger
from schemas.scene import Pose, TargetFrame
from services import pgm
from services.forward_model import (
    captured_fraction_disk,
    captured_fraction_square,
    diffuse_kernel,
    render_video,
    render_wall_frame,
)
from services.storage import ArtifactStorage
from services.targets import block_digit, load_image_file

logger = get_logger("scene_cli")
router = typer.Typer(add_completion=False)


def load_target(digit: int, variant: int, image: Optional[Path]) -> np.ndarray:
    """A target image file, or a builtin block digit"""
    return load_image_file(image) if image is not None else block_digit(digit, variant)


@router.command("kernel")
def kernel(ctx: typer.Context):
    """Write the diffuse transport kernel of the configured geometry"""
    cli = state(ctx)
    geometry = cli.config.geometry
    k = diffuse_kernel(geometry)
    storage = ArtifactStorage(cli.out)
    path = storage.save_bytes("kernel", "kernel.pgm", pgm.encode_pgm(pgm.to_levels(k, float(k.max()))))

    half = geometry.wall_extent_m / 2.0
    emit({
        "path": str(path),
        "shape": list(k.shape),
        "centre_value": float(k[k.shape[0] // 2, k.shape[1] // 2]),
        "peak": float(k.max()),
        "sum": float(k.sum()),
        "captured_fraction_square": captured_fraction_square(half, geometry.standoff_m),
        "captured_fraction_disk_at_standoff": captured_fraction_disk(geometry.standoff_m, geometry.standoff_m),
    })


@router.command("render")
def render(
    ctx: typer.Context,
    digit: int = typer.Option(0, "--digit", help="Builtin block digit"),
    variant: int = typer.Option(0, "--variant"),
    image: Optional[Path] = typer.Option(None, "--image", help="Target image file instead of a builtin digit"),
    dx: float = typer.Option(0.0, "--dx", help="Horizontal offset in metres"),
    dy: float = typer.Option(0.0, "--dy", help="Vertical offset in metres"),
    video: bool = typer.Option(False, "--video", help="Render the whole default trajectory"),
):
    """Render the wall irradiance of one target (or a video along the trajectory)"""
    cli = state(ctx)
    geometry = cli.config.geometry
    target = load_target(digit, variant, image)
    storage = ArtifactStorage(cli.out)

    if video:
        frames = render_video(target, cli.config.trajectory.build(geometry), geometry,
                              cli.config.trajectory.frame_rate)
        scale = max(float(f.image.max()) for f in frames) or 1.0
        for k, frame in enumerate(frames):
            storage.save_bytes("render", f"frame_{k:04d}.pgm", pgm.encode_pgm(pgm.to_levels(frame.image, scale)))
        storage.save_json("render", "timestamps.json", {"t_us": [f.t_us for f in frames]})
        emit({"frames": len(frames), "scale": scale, "dir": str(storage.base_dir / "render")})
        return

    frame = render_wall_frame(TargetFrame(target, Pose(dx_m=dx, dy_m=dy)), geometry)
    scale = float(frame.image.max()) or 1.0
    path = storage.save_bytes("render", "wall.pgm", pgm.encode_pgm(pgm.to_levels(frame.image, scale)))
    emit({"path": str(path), "shape": list(frame.shape), "total": frame.total, "scale": scale})
