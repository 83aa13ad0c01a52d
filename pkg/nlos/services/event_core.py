"""
Event stream validation, time windowing and the NEVT1 / CSV codecs
"""

import csv
import io
import struct
from pathlib import Path
from typing import Optional, Union

import numpy as np

from core.exceptions import (
    BadMagic,
    BadVersion,
    CountMismatch,
    InvalidWindow,
    ParseError,
    StorageError,
    TruncatedRecord,
    ValidationError,
)
from core.logging_config import get_logger
from schemas.events import EventStream, SensorGeometry, ValidationReport

logger = get_logger("event_core")

MAGIC = b"NEVT"
VERSION = 1
# magic, version, flags, reserved, width, height, count
HEADER = struct.Struct("<4sBBHHHQ")
HEADER_SIZE = HEADER.size  # 20
RECORD_DTYPE = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "i1"), ("pad", "V3")])
RECORD_SIZE = RECORD_DTYPE.itemsize  # 16
CSV_HEADER = ["t_us", "x", "y", "p"]


def validate(stream: EventStream) -> ValidationReport:
    """Return the first violated stream invariant, or ok"""
    n = len(stream)
    if n == 0:
        return ValidationReport.passed()

    geometry = stream.geometry
    bad_bounds = (stream.x >= geometry.width) | (stream.y >= geometry.height)
    bad_polarity = (stream.p != 1) & (stream.p != -1)

    t0, t1 = stream.t[:-1], stream.t[1:]
    y0, y1 = stream.y[:-1], stream.y[1:]
    x0, x1 = stream.x[:-1], stream.x[1:]
    p0, p1 = stream.p[:-1], stream.p[1:]
    descending = (t1 < t0) | (
        (t1 == t0) & ((y1 < y0) | ((y1 == y0) & ((x1 < x0) | ((x1 == x0) & (p1 < p0)))))
    )

    candidates = []
    if bad_bounds.any():
        candidates.append((int(np.argmax(bad_bounds)), 0, "out of bounds"))
    if bad_polarity.any():
        candidates.append((int(np.argmax(bad_polarity)), 1, "bad polarity"))
    if descending.any():
        index = int(np.argmax(descending)) + 1
        candidates.append((index, 2, f"unsorted at index {index}"))

    if not candidates:
        return ValidationReport.passed()
    index, _, reason = min(candidates)
    return ValidationReport.violation(index, reason)


def slice_time(stream: EventStream, t0: int, t1: Optional[int] = None) -> EventStream:
    """Events with t0 <= t < t1 (t1=None is unbounded)"""
    if t1 is not None and t0 > t1:
        raise InvalidWindow(t0, t1)

    start = int(np.searchsorted(stream.t, np.uint64(max(t0, 0)), side="left"))
    stop = len(stream) if t1 is None else int(np.searchsorted(stream.t, np.uint64(max(t1, 0)), side="left"))
    return stream.take(slice(start, stop))


# --- NEVT1 binary -----------------------------------------------------------

def write_binary(stream: EventStream) -> bytes:
    """Encode a stream as NEVT1"""
    header = HEADER.pack(MAGIC, VERSION, 0, 0, stream.geometry.width, stream.geometry.height, len(stream))
    records = np.zeros(len(stream), dtype=RECORD_DTYPE)
    records["t"] = stream.t
    records["x"] = stream.x
    records["y"] = stream.y
    records["p"] = stream.p
    return header + records.tobytes()


def read_binary(data: bytes) -> EventStream:
    """Decode NEVT1 bytes"""
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagic(bytes(data[:4]))
    if len(data) < HEADER_SIZE:
        raise TruncatedRecord(f"Header needs {HEADER_SIZE} bytes, got {len(data)}", {"size": len(data)})

    _, version, _flags, _reserved, width, height, count = HEADER.unpack_from(data, 0)
    if version != VERSION:
        raise BadVersion(version)

    body = len(data) - HEADER_SIZE
    full, partial = divmod(body, RECORD_SIZE)
    if partial:
        raise TruncatedRecord(
            f"Trailing {partial} bytes do not form a whole record",
            {"record": full, "bytes": partial},
        )
    if full != count:
        raise CountMismatch(count, full)

    records = np.frombuffer(data, dtype=RECORD_DTYPE, count=count, offset=HEADER_SIZE)
    return EventStream(
        SensorGeometry(width=width, height=height),
        records["t"].astype(np.uint64),
        records["x"].astype(np.uint16),
        records["y"].astype(np.uint16),
        records["p"].astype(np.int8),
    )


# --- CSV --------------------------------------------------------------------

def write_csv(stream: EventStream) -> str:
    """Encode a stream as `t_us,x,y,p` text"""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    writer.writerows(zip(stream.t.tolist(), stream.x.tolist(), stream.y.tolist(), stream.p.tolist()))
    return buffer.getvalue()


def read_csv(text: str, geometry: SensorGeometry) -> EventStream:
    """Decode `t_us,x,y,p` text; line numbers in errors are 1-based"""
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != CSV_HEADER:
        raise ParseError(1, f"expected header {','.join(CSV_HEADER)}")

    t, x, y, p = [], [], [], []
    for line_no, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 4:
            raise ParseError(line_no, f"expected 4 fields, got {len(row)}")
        try:
            values = [int(field.strip()) for field in row]
        except ValueError:
            raise ParseError(line_no, f"non-integer field in {row}")
        if values[0] < 0 or values[1] < 0 or values[2] < 0:
            raise ParseError(line_no, "negative timestamp or coordinate")
        if values[3] not in (1, -1):
            raise ParseError(line_no, f"polarity must be 1 or -1, got {values[3]}")
        if values[1] > 0xFFFF or values[2] > 0xFFFF:
            raise ParseError(line_no, "coordinate exceeds 16 bits")
        if values[0] > 0xFFFFFFFFFFFFFFFF:
            raise ParseError(line_no, "timestamp exceeds 64 bits")
        t.append(values[0])
        x.append(values[1])
        y.append(values[2])
        p.append(values[3])

    return EventStream(geometry, t, x, y, p)


# --- files ------------------------------------------------------------------

def save_stream(path: Union[str, Path], stream: EventStream) -> int:
    """Write a stream by suffix (.nevt binary, .csv text); returns bytes written"""
    path = Path(path)
    payload = write_csv(stream).encode("utf-8") if path.suffix == ".csv" else write_binary(stream)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(payload)
    except OSError as e:
        raise StorageError("write", f"Failed to write {path}: {e}")
    logger.debug(f"Wrote {len(stream)} events to {path}")
    return len(payload)


def load_stream(path: Union[str, Path], geometry: Optional[SensorGeometry] = None) -> EventStream:
    """Read a stream by suffix; CSV needs the sensor geometry"""
    path = Path(path)
    try:
        payload = path.read_bytes()
    except OSError as e:
        raise StorageError("read", f"Failed to read {path}: {e}")

    if path.suffix == ".csv":
        if geometry is None:
            raise ValidationError("CSV event files need an explicit sensor geometry", field="geometry")
        return read_csv(payload.decode("utf-8"), geometry)
    return read_binary(payload)
