"""
Event-related schemas: sensor record, stream container and simulator config
"""

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Iterator, Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator


class Polarity(IntEnum):
    """Sign of the brightness change that triggered an event"""
    OFF = -1
    ON = 1


class SensorGeometry(BaseModel):
    """Pixel array dimensions of the (simulated) event sensor"""
    width: int = Field(..., ge=1, le=65535)
    height: int = Field(..., ge=1, le=65535)

    model_config = {"frozen": True}


class Event(BaseModel):
    """A single asynchronous event (t, x, y, p)"""
    t_us: int = Field(..., ge=0)
    x: int = Field(..., ge=0)
    y: int = Field(..., ge=0)
    polarity: Polarity

    model_config = {"frozen": True}


@dataclass(frozen=True, eq=False)
class EventStream:
    """Ordered events held column-wise.

    Construction only coerces dtypes; ordering and bounds are checked by
    ``services.event_core.validate`` so that broken streams can be reported.
    """
    geometry: SensorGeometry
    t: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint64))
    x: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint16))
    y: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.uint16))
    p: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int8))

    def __post_init__(self):
        columns = {
            "t": np.asarray(self.t, dtype=np.uint64),
            "x": np.asarray(self.x, dtype=np.uint16),
            "y": np.asarray(self.y, dtype=np.uint16),
            "p": np.asarray(self.p, dtype=np.int8),
        }
        lengths = {name: col.shape for name, col in columns.items()}
        if any(col.ndim != 1 for col in columns.values()) or len(set(lengths.values())) != 1:
            raise ValueError(f"Event columns must be 1-D and equally long, got {lengths}")

        for name, col in columns.items():
            col = col.copy() if col is getattr(self, name) else col
            col.setflags(write=False)
            object.__setattr__(self, name, col)

    # --- constructors -----------------------------------------------------

    @classmethod
    def empty(cls, geometry: SensorGeometry) -> "EventStream":
        return cls(geometry)

    @classmethod
    def canonical(cls, geometry: SensorGeometry, t, x, y, p) -> "EventStream":
        """Build a stream sorted by (t, y, x, polarity)"""
        t = np.asarray(t, dtype=np.uint64)
        x = np.asarray(x, dtype=np.uint16)
        y = np.asarray(y, dtype=np.uint16)
        p = np.asarray(p, dtype=np.int8)
        order = np.lexsort((p, x, y, t))
        return cls(geometry, t[order], x[order], y[order], p[order])

    @classmethod
    def from_events(cls, geometry: SensorGeometry, events: Iterable[Event]) -> "EventStream":
        events = list(events)
        return cls(
            geometry,
            np.array([e.t_us for e in events], dtype=np.uint64),
            np.array([e.x for e in events], dtype=np.uint16),
            np.array([e.y for e in events], dtype=np.uint16),
            np.array([int(e.polarity) for e in events], dtype=np.int8),
        )

    # --- accessors --------------------------------------------------------

    def __len__(self) -> int:
        return int(self.t.shape[0])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.geometry == other.geometry
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.p, other.p)
        )

    __hash__ = None

    def events(self) -> Iterator[Event]:
        for t, x, y, p in zip(self.t.tolist(), self.x.tolist(), self.y.tolist(), self.p.tolist()):
            yield Event(t_us=t, x=x, y=y, polarity=Polarity(p))

    def take(self, index) -> "EventStream":
        """Sub-stream from an index array, slice or boolean mask"""
        return EventStream(self.geometry, self.t[index], self.x[index], self.y[index], self.p[index])

    @property
    def t_first(self) -> Optional[int]:
        return int(self.t[0]) if len(self) else None

    @property
    def t_last(self) -> Optional[int]:
        return int(self.t[-1]) if len(self) else None


class ValidationReport(BaseModel):
    """Outcome of stream validation"""
    ok: bool
    index: Optional[int] = None
    reason: Optional[str] = None

    @classmethod
    def passed(cls) -> "ValidationReport":
        return cls(ok=True)

    @classmethod
    def violation(cls, index: int, reason: str) -> "ValidationReport":
        return cls(ok=False, index=index, reason=reason)


class EventSimConfig(BaseModel):
    """Contrast-threshold event simulator parameters"""
    contrast_threshold: float = Field(default=0.15, gt=0.0)
    log_floor: float = Field(default=1e-5, gt=0.0)
    refractory_us: int = Field(default=0, ge=0)
    threshold_jitter: float = Field(default=0.0, ge=0.0, description="Relative sigma of per-pixel thresholds")
    seed: int = 0


class EventRateReport(BaseModel):
    """Event counts and rate over a recording"""
    total: int
    on: int
    off: int
    duration_s: float
    rate_hz: float

    @field_validator('duration_s')
    def validate_duration(cls, v):
        if v <= 0:
            raise ValueError('duration must be positive')
        return v


def stream_summary(stream: EventStream) -> dict:
    """Small JSON-friendly description used by the CLI"""
    return {
        "width": stream.geometry.width,
        "height": stream.geometry.height,
        "count": len(stream),
        "t_first_us": stream.t_first,
        "t_last_us": stream.t_last,
        "on": int(np.count_nonzero(stream.p > 0)),
        "off": int(np.count_nonzero(stream.p < 0)),
    }

