"""
Feature schemas: time-surface configuration and feature frames
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional

import numpy as np
from pydantic import BaseModel, Field


class PolarityMode(str, Enum):
    """How ON/OFF surfaces are combined"""
    SEPARATE_CHANNELS = "separate_channels"
    MERGED_MAX = "merged_max"


class TimeSurfaceConfig(BaseModel):
    """Exponential-decay time-surface parameters"""
    tau_us: Optional[float] = Field(default=None, gt=0.0, description="None = one third of the bin width")
    radius: int = Field(default=3, ge=0, description="Neighbourhood radius for per-event patches")
    polarity_mode: PolarityMode = PolarityMode.MERGED_MAX


@dataclass(frozen=True, eq=False)
class FeatureFrame:
    """One voxel-grid bin rendered as 1 (merged) or 2 (ON, OFF) images in [0, 1]"""
    bin_end_us: int
    channels: np.ndarray

    def __post_init__(self):
        channels = np.array(self.channels, dtype=np.float64)
        if channels.ndim == 2:
            channels = channels[np.newaxis]
        if channels.ndim != 3 or channels.shape[0] not in (1, 2):
            raise ValueError(f"FeatureFrame needs 1 or 2 channels, got shape {channels.shape}")
        if channels.size and (channels.min() < 0.0 or channels.max() > 1.0):
            raise ValueError("FeatureFrame values must lie within [0, 1]")
        channels.setflags(write=False)
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "bin_end_us", int(self.bin_end_us))

    @property
    def n_channels(self) -> int:
        return int(self.channels.shape[0])

    @property
    def image(self) -> np.ndarray:
        """Single-channel view: the merged image, or the pointwise max of ON/OFF"""
        return self.channels[0] if self.n_channels == 1 else self.channels.max(axis=0)
