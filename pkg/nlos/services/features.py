"""
Event features: time-surfaces, voxel-grid binning, count maps and resampling
"""

from typing import List, Optional, Tuple

import numpy as np
from PIL import Image

from core.exceptions import EmptyStream, IndexOutOfRange, ValidationError
from core.logging_config import get_logger
from schemas.events import EventStream, Polarity
from schemas.features import FeatureFrame, PolarityMode, TimeSurfaceConfig
from services.event_core import slice_time

logger = get_logger("features")

NO_EVENT = -1


def _history(stream: EventStream, t_query: int) -> EventStream:
    """Events with t <= t_query"""
    stop = int(np.searchsorted(stream.t, np.uint64(max(int(t_query), 0)), side="right"))
    return stream.take(slice(0, stop))


def _last_timestamps(stream: EventStream, polarity: Optional[Polarity]) -> np.ndarray:
    geometry = stream.geometry
    latest = np.full((geometry.height, geometry.width), NO_EVENT, dtype=np.int64)
    mask = slice(None) if polarity is None else stream.p == int(polarity)
    np.maximum.at(latest, (stream.y[mask].astype(np.intp), stream.x[mask].astype(np.intp)),
                  stream.t[mask].astype(np.int64))
    return latest


def last_timestamp_map(stream: EventStream, t_query: int, polarity: Optional[Polarity] = None) -> np.ma.MaskedArray:
    """Most recent event time per pixel at or before t_query; masked where no event"""
    latest = _last_timestamps(_history(stream, t_query), polarity)
    return np.ma.masked_equal(latest, NO_EVENT)


def _decay(latest: np.ndarray, t_query: int, tau_us: float) -> np.ndarray:
    surface = np.zeros(latest.shape, dtype=np.float64)
    seen = latest != NO_EVENT
    surface[seen] = np.exp(-(float(t_query) - latest[seen].astype(np.float64)) / tau_us)
    return surface


def _resolve_tau(config: TimeSurfaceConfig, tau_us: Optional[float]) -> float:
    tau = tau_us if tau_us is not None else config.tau_us
    if tau is None or tau <= 0:
        raise ValidationError(f"Time-surface decay must be positive, got {tau}", field="tau_us")
    return float(tau)


def time_surface_frame(stream: EventStream, t_query: int, config: TimeSurfaceConfig = TimeSurfaceConfig(),
                       tau_us: Optional[float] = None) -> FeatureFrame:
    """exp(-(t_query - T_last)/tau) per pixel and polarity; 0 where nothing happened yet"""
    tau = _resolve_tau(config, tau_us)
    history = _history(stream, t_query)
    on = _decay(_last_timestamps(history, Polarity.ON), t_query, tau)
    off = _decay(_last_timestamps(history, Polarity.OFF), t_query, tau)

    if config.polarity_mode == PolarityMode.SEPARATE_CHANNELS:
        channels = np.stack([on, off])
    else:
        channels = np.maximum(on, off)[np.newaxis]
    return FeatureFrame(int(t_query), channels)


def event_time_surface_patch(stream: EventStream, event_index: int, radius: int, tau_us: float) -> np.ndarray:
    """(2r+1)^2 local surface around event i from same-polarity events j <= i"""
    if not 0 <= event_index < len(stream):
        raise IndexOutOfRange(event_index, len(stream))
    if tau_us <= 0:
        raise ValidationError(f"Time-surface decay must be positive, got {tau_us}", field="tau_us")

    t_i = int(stream.t[event_index])
    x_i, y_i = int(stream.x[event_index]), int(stream.y[event_index])
    latest = _last_timestamps(stream.take(slice(0, event_index + 1)), Polarity(int(stream.p[event_index])))
    surface = _decay(latest, t_i, tau_us)

    size = 2 * radius + 1
    patch = np.zeros((size, size), dtype=np.float64)
    height, width = surface.shape
    r0, r1 = max(y_i - radius, 0), min(y_i + radius + 1, height)
    c0, c1 = max(x_i - radius, 0), min(x_i + radius + 1, width)
    patch[r0 - (y_i - radius):r1 - (y_i - radius), c0 - (x_i - radius):c1 - (x_i - radius)] = surface[r0:r1, c0:c1]
    return patch


def bin_ends(start: int, end: int, n_bins: int) -> List[int]:
    """Integer bin end times; the last one is exactly `end`"""
    return [start + ((k + 1) * (end - start)) // n_bins for k in range(n_bins)]


def voxel_grid_features(stream: EventStream, n_bins: int, config: TimeSurfaceConfig = TimeSurfaceConfig(),
                        span: Optional[Tuple[int, int]] = None) -> List[FeatureFrame]:
    """One time-surface per equal time bin, evaluated at the bin end"""
    if n_bins < 1:
        raise ValidationError(f"n_bins must be at least 1, got {n_bins}", field="n_bins")
    if span is None:
        if len(stream) == 0:
            raise EmptyStream()
        start, end = stream.t_first, stream.t_last
    else:
        start, end = int(span[0]), int(span[1])
        if end < start:
            raise ValidationError(f"Span end {end} precedes start {start}", field="span")

    tau = config.tau_us if config.tau_us is not None else max((end - start) / n_bins / 3.0, 1.0)
    ends = bin_ends(start, end, n_bins)

    frames = []
    for k, end_k in enumerate(ends):
        last = k == n_bins - 1
        # last bin is closed on the right
        window = _history(stream, end_k) if last else slice_time(stream, 0, end_k)
        frames.append(time_surface_frame(window, end_k, config, tau))

    logger.debug(f"Built {n_bins} voxel-grid frames over [{start}, {end}] us from {len(stream)} events")
    return frames


def event_count_map(stream: EventStream, t0: int, t1: int, per_polarity: bool = False) -> np.ndarray:
    """Number of events per pixel in [t0, t1); shape (2, H, W) = (ON, OFF) when per_polarity"""
    window = slice_time(stream, t0, t1)
    geometry = stream.geometry
    flat = window.y.astype(np.int64) * geometry.width + window.x.astype(np.int64)
    size = geometry.height * geometry.width

    def counts(index: np.ndarray) -> np.ndarray:
        return np.bincount(index, minlength=size).reshape(geometry.height, geometry.width)

    if per_polarity:
        return np.stack([counts(flat[window.p > 0]), counts(flat[window.p < 0])])
    return counts(flat)


def downsample(image: np.ndarray, size: int) -> np.ndarray:
    """Area-average resize of a float image to size x size"""
    image = np.asarray(image, dtype=np.float64)
    if image.shape == (size, size):
        return image.copy()
    resized = Image.fromarray(image.astype(np.float32)).resize((size, size), Image.Resampling.BOX)
    return np.asarray(resized, dtype=np.float64)
