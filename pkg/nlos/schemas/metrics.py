"""
Metric schemas: SSIM / contour-distance configuration and report rows
"""

from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, Field


LPIPS_STATUS = "not available"


class SsimWindow(str, Enum):
    """Averaging window for SSIM statistics"""
    GLOBAL = "global"
    GAUSSIAN = "gaussian_11x11_sigma1.5"


class SsimConfig(BaseModel):
    """SSIM constants (standard defaults)"""
    window: SsimWindow = SsimWindow.GLOBAL
    k1: float = Field(default=0.01, gt=0.0)
    k2: float = Field(default=0.03, gt=0.0)
    dynamic_range: float = Field(default=1.0, gt=0.0)

    @property
    def c1(self) -> float:
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.dynamic_range) ** 2


class CdConfig(BaseModel):
    """Binarization used by the contour distance"""
    binarize_threshold: int = Field(default=128, ge=1, le=255)


class DataVolumeReport(BaseModel):
    """Event vs. frame recording sizes"""
    event_bytes: int
    frame_bytes: int
    ratio: float
    summary: str


class SampleMetrics(BaseModel):
    """One evaluated (reconstruction, ground truth) pair"""
    sample_id: str
    frame_index: int
    digit: int
    group: str
    modality: str
    psnr_db: float
    ssim: float
    cd_recon: Optional[float] = None
    cd_gt: Optional[float] = None
    cd_deviation: Optional[float] = None
    no_foreground: Optional[str] = None


class AggregateMetrics(BaseModel):
    """Means over a set of samples"""
    count: int
    psnr_db: Optional[float] = None
    psnr_infinite: int = 0
    ssim: Optional[float] = None
    cd_deviation: Optional[float] = None
    cd_excluded: int = 0
    lpips: str = LPIPS_STATUS


class MetricSummary(BaseModel):
    """Per-split summary written next to the per-sample CSV"""
    split: str
    modality: str
    overall: AggregateMetrics
    per_digit: Dict[str, AggregateMetrics] = {}
    per_position: Dict[str, AggregateMetrics] = {}
    per_group: Dict[str, AggregateMetrics] = {}
    samples: List[SampleMetrics] = []


class ComparisonRow(BaseModel):
    """Aggregates of one modality over a slice of the split; unset labels span the whole split"""
    modality: str
    digit: Optional[str] = None
    group: Optional[str] = None
    position: Optional[int] = None
    count: int
    psnr_db: Optional[float] = None
    ssim: Optional[float] = None
    cd_deviation: Optional[float] = None


class ComparisonReport(BaseModel):
    """E vs F reconstruction under one model and training configuration"""
    split: str
    rows: List[ComparisonRow]
    group_rows: List[ComparisonRow] = []
    position_rows: List[ComparisonRow] = []
    overall: Dict[str, AggregateMetrics]
    data_volume: DataVolumeReport
    lpips: str = LPIPS_STATUS
