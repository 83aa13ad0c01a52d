"""
Contrast-threshold event simulator

Each pixel keeps a reference log intensity. Between two frames the log
intensity is interpolated linearly in time, and every crossing of
reference +/- C emits one event at the interpolated instant.
"""

from typing import Sequence

import numpy as np

from core.exceptions import MismatchedDims, NonMonotonicTimestamps, TooFewFrames, ValidationError
from core.logging_config import get_logger
from schemas.events import EventRateReport, EventSimConfig, EventStream, SensorGeometry
from schemas.scene import WallFrame

logger = get_logger("event_sim")

# threshold units; exact multiples of C still count as crossings
CROSSING_TOLERANCE = 1e-9


def _check_frames(frames: Sequence[WallFrame]) -> None:
    if len(frames) < 2:
        raise TooFewFrames(len(frames))
    shape = frames[0].shape
    for index, frame in enumerate(frames[1:], start=1):
        if frame.shape != shape:
            raise MismatchedDims(index, shape, frame.shape)
        if frame.t_us <= frames[index - 1].t_us:
            raise NonMonotonicTimestamps(index)


def _thresholds(shape, config: EventSimConfig) -> np.ndarray:
    c = config.contrast_threshold
    if config.threshold_jitter <= 0.0:
        return np.full(shape, c, dtype=np.float64)
    rng = np.random.default_rng(config.seed)
    jittered = c * (1.0 + config.threshold_jitter * rng.standard_normal(shape))
    return np.maximum(jittered, 0.01 * c)


def _crossings(l_ref, l_b, thresholds, sign):
    """Pixel indices, crossing levels and counts for one polarity"""
    excess = sign * (l_b - l_ref) / thresholds
    counts = np.floor(excess + CROSSING_TOLERANCE).astype(np.int64)
    counts[counts < 0] = 0
    pixels = np.flatnonzero(counts)
    if pixels.size == 0:
        return pixels, np.zeros(0), counts
    n = counts[pixels]
    owner = np.repeat(pixels, n)
    step = np.arange(owner.size) - np.repeat(np.cumsum(n) - n, n) + 1
    levels = l_ref[owner] + sign * step * thresholds[owner]
    return owner, levels, counts


def _apply_refractory(t, pixel, refractory_us: int) -> np.ndarray:
    """Keep mask dropping events closer than refractory_us to the previous kept one at a pixel"""
    keep = np.ones(t.size, dtype=bool)
    order = np.lexsort((t, pixel))
    last_pixel, last_t = -1, 0
    for i in order:
        if pixel[i] == last_pixel and t[i] - last_t < refractory_us:
            keep[i] = False
            continue
        last_pixel, last_t = pixel[i], t[i]
    return keep


def simulate_events(frames: Sequence[WallFrame], config: EventSimConfig = EventSimConfig()) -> EventStream:
    """Convert a timed frame sequence into a canonically ordered event stream"""
    _check_frames(frames)
    height, width = frames[0].shape
    geometry = SensorGeometry(width=width, height=height)

    thresholds = _thresholds(height * width, config)

    def log_of(frame: WallFrame) -> np.ndarray:
        return np.log(np.maximum(frame.image.reshape(-1), config.log_floor))

    l_ref = log_of(frames[0])
    l_a = l_ref.copy()

    chunks_t, chunks_pixel, chunks_p = [], [], []
    for prev, frame in zip(frames, frames[1:]):
        l_b = log_of(frame)
        delta = l_b - l_a
        dt = frame.t_us - prev.t_us

        for sign in (1, -1):
            owner, levels, counts = _crossings(l_ref, l_b, thresholds, sign)
            if owner.size:
                d = delta[owner]
                safe = np.where(d == 0.0, 1.0, d)
                frac = np.where(d == 0.0, 1.0, np.clip((levels - l_a[owner]) / safe, 0.0, 1.0))
                chunks_t.append(np.floor(prev.t_us + frac * dt + 0.5).astype(np.uint64))
                chunks_pixel.append(owner)
                chunks_p.append(np.full(owner.size, sign, dtype=np.int8))
            l_ref = l_ref + sign * counts * thresholds

        l_a = l_b

    if not chunks_t:
        logger.debug(f"No events from {len(frames)} frames")
        return EventStream.empty(geometry)

    t = np.concatenate(chunks_t)
    pixel = np.concatenate(chunks_pixel)
    p = np.concatenate(chunks_p)

    if config.refractory_us > 0:
        keep = _apply_refractory(t.astype(np.int64), pixel, config.refractory_us)
        t, pixel, p = t[keep], pixel[keep], p[keep]

    y, x = np.divmod(pixel, width)
    stream = EventStream.canonical(geometry, t, x, y, p)
    logger.debug(f"Simulated {len(stream)} events from {len(frames)} frames")
    return stream


def event_rate_report(stream: EventStream, duration_s: float) -> EventRateReport:
    """Counts per polarity and mean event rate"""
    if duration_s <= 0:
        raise ValidationError(f"Duration must be positive, got {duration_s}", field="duration_s")
    on = int(np.count_nonzero(stream.p > 0))
    off = int(np.count_nonzero(stream.p < 0))
    total = len(stream)
    return EventRateReport(total=total, on=on, off=off, duration_s=duration_s, rate_hz=total / duration_s)
