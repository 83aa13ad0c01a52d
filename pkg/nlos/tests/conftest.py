"""
Shared fixtures for the EventNLOS test suite
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add the application directory to path
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from schemas.events import EventStream, SensorGeometry  # noqa: E402
from schemas.scene import SceneGeometry  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def make_stream():
    """Factory for random valid streams in canonical order"""

    def factory(n: int, width: int = 8, height: int = 6, t_max: int = 1000, seed: int = 0) -> EventStream:
        gen = np.random.default_rng(seed)
        return EventStream.canonical(
            SensorGeometry(width=width, height=height),
            gen.integers(0, t_max, n),
            gen.integers(0, width, n),
            gen.integers(0, height, n),
            gen.choice([-1, 1], n),
        )

    return factory


@pytest.fixture
def equal_pitch_geometry():
    """8x8 target on a 16x16 wall, both at 5 mm pitch, so placement is exact"""
    return SceneGeometry(standoff_m=0.01, target_extent_m=0.04, target_res=8,
                         wall_extent_m=0.08, wall_res=16, display_extent_m=0.08, canvas_res=16)


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: end-to-end experiments (deselect with -m 'not slow')")
