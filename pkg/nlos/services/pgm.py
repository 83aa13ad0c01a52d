"""
Binary PGM (P5) reader/writer, 8 and 16 bit
"""

from pathlib import Path
from typing import Union

import numpy as np

from core.exceptions import StorageError, ValidationError


def encode_pgm(image: np.ndarray, maxval: int = 65535) -> bytes:
    """Encode a 2-D unsigned integer image as P5"""
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValidationError(f"PGM images must be 2-D, got shape {image.shape}", field="image")
    if not 1 <= maxval <= 65535:
        raise ValidationError(f"PGM maxval must be within 1-65535, got {maxval}", field="maxval")
    if image.size and (image.min() < 0 or image.max() > maxval):
        raise ValidationError(f"PGM samples must lie within [0, {maxval}]", field="image")

    height, width = image.shape
    header = f"P5\n{width} {height}\n{maxval}\n".encode("ascii")
    dtype = ">u2" if maxval > 255 else "u1"
    return header + np.ascontiguousarray(image, dtype=dtype).tobytes()


def _tokens(data: bytes, count: int):
    """Read `count` whitespace separated header tokens, skipping # comments"""
    tokens = []
    pos = 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ValidationError("Truncated PGM header", field="pgm")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def _decode(data: bytes):
    tokens, offset = _tokens(data, 4)
    if tokens[0] != b"P5":
        raise ValidationError(f"Not a binary PGM (magic {tokens[0]!r})", field="pgm")
    try:
        width, height, maxval = (int(tok) for tok in tokens[1:])
    except ValueError:
        raise ValidationError("Non-numeric PGM header field", field="pgm")
    if width < 1 or height < 1 or not 1 <= maxval <= 65535:
        raise ValidationError(f"Invalid PGM header {width}x{height} maxval {maxval}", field="pgm")

    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    needed = width * height * dtype.itemsize
    if len(data) - offset < needed:
        raise ValidationError(f"PGM raster needs {needed} bytes, got {len(data) - offset}", field="pgm")

    raster = np.frombuffer(data, dtype=dtype, count=width * height, offset=offset)
    return raster.reshape(height, width).astype(np.uint16 if maxval > 255 else np.uint8), maxval


def decode_pgm(data: bytes) -> np.ndarray:
    """Decode P5 bytes into a uint8 or uint16 array"""
    return _decode(data)[0]


def to_levels(image: np.ndarray, scale: float = 1.0, maxval: int = 65535) -> np.ndarray:
    """Quantise a float image so that `scale` maps to maxval (round half up)"""
    image = np.asarray(image, dtype=np.float64)
    levels = np.floor(image / scale * maxval + 0.5) if scale > 0 else np.zeros_like(image)
    return np.clip(levels, 0, maxval).astype(np.uint16 if maxval > 255 else np.uint8)


def write_pgm(path: Union[str, Path], image: np.ndarray, maxval: int = 65535) -> int:
    """Write an integer image; returns bytes written"""
    payload = encode_pgm(image, maxval)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(payload)
    except OSError as e:
        raise StorageError("write", f"Failed to write {path}: {e}")
    return len(payload)


def read_pgm(path: Union[str, Path]) -> np.ndarray:
    path = Path(path)
    try:
        return decode_pgm(path.read_bytes())
    except OSError as e:
        raise StorageError("read", f"Failed to read {path}: {e}")


def read_pgm_float(path: Union[str, Path], scale: float = 1.0) -> np.ndarray:
    """Read a PGM and map maxval back to `scale`"""
    path = Path(path)
    try:
        image, maxval = _decode(path.read_bytes())
    except OSError as e:
        raise StorageError("read", f"Failed to read {path}: {e}")
    return image.astype(np.float64) / maxval * scale
