"""
Tests for PGM coding, target sources and artifact storage
"""

import gzip
import struct

import numpy as np
import pytest
from PIL import Image

from core.exceptions import NotFoundError, ValidationError
from schemas.dataset import TargetSource, TargetSourceKind
from services import pgm
from services.storage import ArtifactStorage, ManifestStorage
from services.targets import TargetLibrary, block_digit, load_image_file, read_idx_images


# --- PGM --------------------------------------------------------------------

def test_pgm_16bit_with_comment():
    raster = np.array([[0, 1, 65535], [256, 300, 7]], dtype=np.uint16)
    data = b"P5\n# written by hand\n3 2\n65535\n" + raster.astype(">u2").tobytes()
    np.testing.assert_array_equal(pgm.decode_pgm(data), raster)
    assert pgm.encode_pgm(raster).startswith(b"P5\n3 2\n65535\n")


def test_pgm_8bit_file(tmp_path):
    image = np.arange(12, dtype=np.uint8).reshape(3, 4)
    size = pgm.write_pgm(tmp_path / "a.pgm", image, maxval=255)
    assert size == len(b"P5\n4 3\n255\n") + 12
    np.testing.assert_array_equal(pgm.read_pgm(tmp_path / "a.pgm"), image)
    assert pgm.read_pgm_float(tmp_path / "a.pgm")[2, 3] == pytest.approx(11 / 255)


def test_to_levels_rounds_half_up_and_clips():
    levels = pgm.to_levels(np.array([[0.6 / 255, 0.5, 2.0, -1.0]]), 1.0, maxval=255)
    assert levels.tolist() == [[1, 128, 255, 0]]
    assert levels.dtype == np.uint8
    assert pgm.to_levels(np.ones((2, 2)), 0.0).max() == 0


def test_pgm_errors():
    with pytest.raises(ValidationError):
        pgm.decode_pgm(b"P2\n1 1\n255\n0")
    with pytest.raises(ValidationError):
        pgm.decode_pgm(b"P5\n2 2\n255\n\x00\x00")
    with pytest.raises(ValidationError):
        pgm.decode_pgm(b"P5\n2")
    with pytest.raises(ValidationError):
        pgm.encode_pgm(np.full((2, 2), 300), maxval=255)
    with pytest.raises(ValidationError):
        pgm.encode_pgm(np.zeros(4, dtype=np.uint8))


# --- targets ----------------------------------------------------------------

def test_block_digits():
    for digit in range(10):
        image = block_digit(digit)
        assert image.shape == (28, 28)
        assert set(np.unique(image)) == {0.0, 1.0}
    assert not np.array_equal(block_digit(3, 0), block_digit(3, 1))
    assert block_digit(3, 2).sum() > block_digit(3, 0).sum()
    with pytest.raises(ValidationError):
        block_digit(10)
    with pytest.raises(ValidationError):
        block_digit(1, -1)


def _write_idx(tmp_path, images, labels):
    images_path = tmp_path / "images-idx3-ubyte.gz"
    labels_path = tmp_path / "labels-idx1-ubyte"
    header = struct.pack(">IIII", 0x00000803, len(images), 28, 28)
    images_path.write_bytes(gzip.compress(header + np.asarray(images, dtype=np.uint8).tobytes()))
    labels_path.write_bytes(struct.pack(">II", 0x00000801, len(labels)) + bytes(labels))
    return images_path, labels_path


def test_idx_library(tmp_path, rng):
    images = rng.integers(0, 256, (3, 28, 28))
    images_path, labels_path = _write_idx(tmp_path, images, [3, 1, 3])
    library = TargetLibrary(TargetSource(kind=TargetSourceKind.IDX_UBYTE, images_path=str(images_path),
                                         labels_path=str(labels_path)))
    np.testing.assert_allclose(library.get(3, 1), images[2] / 255.0)
    np.testing.assert_allclose(library.get(1, 0), images[1] / 255.0)
    with pytest.raises(NotFoundError):
        library.get(1, 1)
    with pytest.raises(NotFoundError):
        library.get(5, 0)


def test_idx_archive_errors(tmp_path, rng):
    images_path, labels_path = _write_idx(tmp_path, rng.integers(0, 256, (2, 28, 28)), [0])
    with pytest.raises(ValidationError):
        TargetLibrary(TargetSource(kind=TargetSourceKind.IDX_UBYTE, images_path=str(images_path),
                                   labels_path=str(labels_path)))
    bad = tmp_path / "bad-idx3"
    bad.write_bytes(struct.pack(">IIII", 0x00000801, 1, 28, 28))
    with pytest.raises(ValidationError):
        read_idx_images(bad)


def test_directory_library(tmp_path):
    digits = tmp_path / "digits"
    digits.mkdir()
    three = pgm.to_levels(block_digit(3), maxval=255)
    pgm.write_pgm(digits / "3_a.pgm", three, maxval=255)
    Image.fromarray(pgm.to_levels(block_digit(7, 1), maxval=255)).save(digits / "7_b.png")
    (digits / "notes.txt").write_text("ignored")

    library = TargetLibrary(TargetSource(kind=TargetSourceKind.PGM_DIRECTORY, directory=str(digits)))
    np.testing.assert_array_equal(library.get(3, 0), block_digit(3))
    np.testing.assert_array_equal(library.get(7, 0), block_digit(7, 1))
    with pytest.raises(NotFoundError):
        library.get(0, 0)
    with pytest.raises(NotFoundError):
        TargetLibrary(TargetSource(kind=TargetSourceKind.PGM_DIRECTORY, directory=str(tmp_path / "none")))


def test_image_files_are_resized(tmp_path):
    Image.new("L", (56, 56), color=255).save(tmp_path / "big.png")
    image = load_image_file(tmp_path / "big.png")
    assert image.shape == (28, 28)
    np.testing.assert_allclose(image, 1.0)


def test_source_requires_paths():
    with pytest.raises(ValueError):
        TargetSource(kind=TargetSourceKind.IDX_UBYTE, images_path="x")
    with pytest.raises(ValueError):
        TargetSource(kind=TargetSourceKind.PGM_DIRECTORY)


# --- storage ----------------------------------------------------------------

def test_json_round_trip_is_atomic(tmp_path):
    storage = ArtifactStorage(tmp_path)
    path = storage.save_json("runs", "b.json", {"z": 1, "a": [1, 2]})
    storage.save_json("runs", "a.json", {})
    assert storage.load_json("runs", "b.json") == {"z": 1, "a": [1, 2]}
    assert path.read_text().index('"a"') < path.read_text().index('"z"')
    assert storage.list_items("runs") == ["a.json", "b.json"]
    assert not list((tmp_path / "runs").glob("*.tmp"))
    assert storage.relative(path) == "runs/b.json"


def test_missing_artifacts(tmp_path):
    storage = ArtifactStorage(tmp_path)
    with pytest.raises(NotFoundError):
        storage.load_json("runs", "missing.json")
    with pytest.raises(NotFoundError):
        storage.load_bytes("", "missing.nevt")
    with pytest.raises(NotFoundError):
        ManifestStorage(storage).load_manifest()
    assert storage.list_items("nothing") == []
