"""
Event commands: simulation and featurization
"""

from pathlib import Path
from typing import Optional

import numpy as np
import typer

from cli.context import emit, state
from cli.scene import load_target
from core.exceptions import EmptyStream, ValidationError
from core.logging_config import get_logger
from schemas.events import SensorGeometry, stream_summary
from schemas.features import PolarityMode
from schemas.scene import WallFrame
from services import pgm
from services.event_core import load_stream, save_stream, validate
from services.event_sim import event_rate_report, simulate_events
from services.features import bin_ends, event_count_map, voxel_grid_features
from services.forward_model import render_video
from services.storage import ArtifactStorage

logger = get_logger("events_cli")
router = typer.Typer(add_completion=False)


@router.command("simulate")
def simulate(
    ctx: typer.Context,
    digit: int = typer.Option(0, "--digit"),
    variant: int = typer.Option(0, "--variant"),
    image: Optional[Path] = typer.Option(None, "--image"),
    fmt: str = typer.Option("nevt", "--format", help="nevt or csv"),
):
    """Render a moving target and convert the wall video into events"""
    cli = state(ctx)
    config = cli.config
    target = load_target(digit, variant, image)
    trajectory = config.trajectory.build(config.geometry)
    video = render_video(target, trajectory, config.geometry, config.trajectory.frame_rate)
    peak = max(float(f.image.max()) for f in video) or 1.0
    stream = simulate_events([WallFrame(f.t_us, f.image / peak) for f in video], config.event_sim)

    suffix = "csv" if fmt.lower() == "csv" else "nevt"
    path = ArtifactStorage(cli.out).path("events", f"events.{suffix}")
    size = save_stream(path, stream)
    duration_s = max(video[-1].t_us - video[0].t_us, 1) / 1e6
    emit({
        "path": str(path),
        "bytes": size,
        "stream": stream_summary(stream),
        "rate": event_rate_report(stream, duration_s).model_dump(),
    })


@router.command("featurize")
def featurize(
    ctx: typer.Context,
    events: Path = typer.Option(..., "--events", help="Event file (.nevt or .csv)"),
    bins: int = typer.Option(6, "--bins"),
    width: Optional[int] = typer.Option(None, "--width", help="Sensor width for CSV input"),
    height: Optional[int] = typer.Option(None, "--height", help="Sensor height for CSV input"),
    mode: Optional[PolarityMode] = typer.Option(None, "--mode"),
    tau_us: Optional[float] = typer.Option(None, "--tau-us"),
    counts: bool = typer.Option(False, "--counts", help="Event count maps instead of time-surfaces"),
):
    """Voxel-grid time-surfaces (or count maps) of an event file"""
    cli = state(ctx)
    geometry = SensorGeometry(width=width, height=height) if width and height else None
    stream = load_stream(events, geometry)
    report = validate(stream)
    if not report.ok:
        raise ValidationError(f"Event stream invalid at index {report.index}: {report.reason}", field="events",
                              details={"index": report.index, "reason": report.reason})

    overrides = {k: v for k, v in {"polarity_mode": mode, "tau_us": tau_us}.items() if v is not None}
    config = cli.config.time_surface.model_copy(update=overrides)
    storage = ArtifactStorage(cli.out)

    if counts:
        if len(stream) == 0:
            raise EmptyStream()
        ends = bin_ends(stream.t_first, stream.t_last, bins)
        starts = [stream.t_first] + ends[:-1]
        written = []
        for k, (t0, end_us) in enumerate(zip(starts, ends)):
            # the last bin is closed on the right
            t1 = end_us + (1 if k == bins - 1 else 0)
            count = event_count_map(stream, t0, t1)
            peak = int(count.max()) or 1
            storage.save_bytes("features", f"count_{k:03d}.pgm",
                               pgm.encode_pgm(pgm.to_levels(count.astype(np.float64), peak)))
            written.append({"bin_end_us": end_us, "events": int(count.sum()), "peak": peak})
        emit({"bins": written, "dir": str(storage.base_dir / "features")})
        return

    frames = voxel_grid_features(stream, bins, config)
    for k, frame in enumerate(frames):
        for c in range(frame.n_channels):
            storage.save_bytes("features", f"ts_{k:03d}_c{c}.pgm", pgm.encode_pgm(pgm.to_levels(frame.channels[c])))
    emit({
        "bins": [{"bin_end_us": f.bin_end_us, "channels": f.n_channels, "mean": float(f.image.mean())} for f in frames],
        "dir": str(storage.base_dir / "features"),
    })
