"""
Hidden target images: IDX archives, image folders and builtin block digits
"""

import gzip
import re
import struct
from functools import lru_cache
from pathlib import Path
from typing import Dict, List

import numpy as np
from PIL import Image

from core.exceptions import NotFoundError, StorageError, ValidationError
from core.logging_config import get_logger
from schemas.dataset import TargetSource, TargetSourceKind

logger = get_logger("targets")

TARGET_SIZE = 28
IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

# 5x7 block glyphs, one string per row
GLYPHS = {
    0: ["01110", "10001", "10011", "10101", "11001", "10001", "01110"],
    1: ["00100", "01100", "00100", "00100", "00100", "00100", "01110"],
    2: ["01110", "10001", "00001", "00010", "00100", "01000", "11111"],
    3: ["11111", "00010", "00100", "00010", "00001", "10001", "01110"],
    4: ["00010", "00110", "01010", "10010", "11111", "00010", "00010"],
    5: ["11111", "10000", "11110", "00001", "00001", "10001", "01110"],
    6: ["00110", "01000", "10000", "11110", "10001", "10001", "01110"],
    7: ["11111", "00001", "00010", "00100", "01000", "01000", "01000"],
    8: ["01110", "10001", "10001", "01110", "10001", "10001", "01110"],
    9: ["01110", "10001", "10001", "01111", "00001", "00010", "01100"],
}
HORIZONTAL_SHIFTS = [0, -2, 2, -1, 1, -3, 3]


def block_digit(digit: int, variant: int = 0) -> np.ndarray:
    """28x28 block digit; variants differ in cell size, stroke weight and offset"""
    if digit not in GLYPHS:
        raise ValidationError(f"Digit must be within 0-9, got {digit}", field="digit")
    if variant < 0:
        raise ValidationError(f"Variant must be nonnegative, got {variant}", field="variant")

    cell = 4 if variant % 2 == 0 else 3
    bold = (variant // 2) % 2 == 1
    shift = HORIZONTAL_SHIFTS[(variant // 4) % len(HORIZONTAL_SHIFTS)]

    glyph = np.array([[int(c) for c in row] for row in GLYPHS[digit]], dtype=np.float64)
    scaled = np.kron(glyph, np.ones((cell, cell)))
    if bold:
        thick = scaled.copy()
        thick[:, 1:] = np.maximum(thick[:, 1:], scaled[:, :-1])
        thick[1:, :] = np.maximum(thick[1:, :], scaled[:-1, :])
        scaled = thick

    height, width = scaled.shape
    canvas = np.zeros((TARGET_SIZE, TARGET_SIZE), dtype=np.float64)
    top = (TARGET_SIZE - height) // 2
    left = int(np.clip((TARGET_SIZE - width) // 2 + shift, 0, TARGET_SIZE - width))
    canvas[top:top + height, left:left + width] = scaled[:TARGET_SIZE - top, :]
    return canvas


def _read(path: Path) -> bytes:
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise StorageError("read", f"Failed to read {path}: {e}")
    return gzip.decompress(raw) if path.suffix == ".gz" else raw


def read_idx_images(path: Path) -> np.ndarray:
    """(n, rows, cols) uint8 images from an IDX3 archive"""
    data = _read(Path(path))
    if len(data) < 16:
        raise ValidationError(f"IDX image header truncated in {path}", field="images_path")
    magic, count, rows, cols = struct.unpack_from(">IIII", data, 0)
    if magic != IDX_IMAGES_MAGIC:
        raise ValidationError(f"Bad IDX image magic 0x{magic:08x} in {path}", field="images_path")
    if len(data) - 16 < count * rows * cols:
        raise ValidationError(f"IDX image archive {path} is truncated", field="images_path")
    return np.frombuffer(data, dtype=np.uint8, count=count * rows * cols, offset=16).reshape(count, rows, cols)


def read_idx_labels(path: Path) -> np.ndarray:
    data = _read(Path(path))
    if len(data) < 8:
        raise ValidationError(f"IDX label header truncated in {path}", field="labels_path")
    magic, count = struct.unpack_from(">II", data, 0)
    if magic != IDX_LABELS_MAGIC:
        raise ValidationError(f"Bad IDX label magic 0x{magic:08x} in {path}", field="labels_path")
    if len(data) - 8 < count:
        raise ValidationError(f"IDX label archive {path} is truncated", field="labels_path")
    return np.frombuffer(data, dtype=np.uint8, count=count, offset=8)


def load_image_file(path: Path) -> np.ndarray:
    """Any Pillow-readable image as a 28x28 float image in [0, 1]"""
    try:
        with Image.open(path) as img:
            gray = img.convert("L")
            if gray.size != (TARGET_SIZE, TARGET_SIZE):
                gray = gray.resize((TARGET_SIZE, TARGET_SIZE), Image.Resampling.BOX)
            return np.asarray(gray, dtype=np.float64) / 255.0
    except OSError as e:
        raise StorageError("read", f"Failed to read image {path}: {e}")


_DIGIT_FILE = re.compile(r"^(\d)_.*\.(pgm|png)$", re.IGNORECASE)


class TargetLibrary:
    """Per-digit target images from one source"""

    def __init__(self, source: TargetSource):
        self.source = source
        self._images: Dict[int, List[np.ndarray]] = {}
        if source.kind == TargetSourceKind.IDX_UBYTE:
            self._load_idx()
        elif source.kind == TargetSourceKind.PGM_DIRECTORY:
            self._load_directory()

    def _load_idx(self) -> None:
        images = read_idx_images(Path(self.source.images_path))
        labels = read_idx_labels(Path(self.source.labels_path))
        if images.shape[1:] != (TARGET_SIZE, TARGET_SIZE):
            raise ValidationError(f"IDX images must be 28x28, got {images.shape[1:]}", field="images_path")
        if len(labels) != len(images):
            raise ValidationError(f"{len(images)} images but {len(labels)} labels", field="labels_path")
        for image, label in zip(images, labels):
            self._images.setdefault(int(label), []).append(image.astype(np.float64) / 255.0)
        logger.info(f"Loaded {len(images)} IDX targets from {self.source.images_path}")

    def _load_directory(self) -> None:
        directory = Path(self.source.directory)
        if not directory.is_dir():
            raise NotFoundError("target directory", str(directory))
        count = 0
        for path in sorted(directory.iterdir()):
            match = _DIGIT_FILE.match(path.name)
            if match:
                self._images.setdefault(int(match.group(1)), []).append(load_image_file(path))
                count += 1
        logger.info(f"Loaded {count} targets from {directory}")

    def get(self, digit: int, variant: int) -> np.ndarray:
        """The variant-th image of a digit"""
        if self.source.kind == TargetSourceKind.BUILTIN_BLOCK_DIGITS:
            return block_digit(digit, variant)
        images = self._images.get(digit, [])
        if variant >= len(images):
            raise NotFoundError("target", f"digit {digit} variant {variant} ({len(images)} available)")
        return images[variant]


@lru_cache(maxsize=8)
def _cached_library(source_json: str) -> TargetLibrary:
    return TargetLibrary(TargetSource.model_validate_json(source_json))


def target_library(source: TargetSource) -> TargetLibrary:
    """Shared library per source (archives are decoded once per process)"""
    return _cached_library(source.model_dump_json())
