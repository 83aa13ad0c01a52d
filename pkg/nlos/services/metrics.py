"""
Reconstruction quality metrics: PSNR, SSIM, contour distance and data volume
"""

import csv
import io
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from scipy.signal import correlate2d

from core.exceptions import DimMismatch, NoForeground, ValidationError
from core.logging_config import get_logger
from schemas.metrics import (
    AggregateMetrics,
    CdConfig,
    DataVolumeReport,
    MetricSummary,
    SampleMetrics,
    SsimConfig,
    SsimWindow,
)

logger = get_logger("metrics")

GAUSSIAN_SIZE = 11
GAUSSIAN_SIGMA = 1.5


def _pair(a: np.ndarray, b: np.ndarray):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimMismatch(f"Image shapes differ: {a.shape} vs {b.shape}",
                          {"a": list(a.shape), "b": list(b.shape)})
    return a, b


def mse(a: np.ndarray, b: np.ndarray) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a: np.ndarray, b: np.ndarray, peak: float = 1.0) -> float:
    """10 log10(peak^2 / MSE); +inf for identical images"""
    error = mse(a, b)
    if error == 0.0:
        return math.inf
    return 10.0 * math.log10(peak ** 2 / error)


def gaussian_window(size: int, sigma: float = GAUSSIAN_SIGMA) -> np.ndarray:
    """Normalised 2-D Gaussian window"""
    g = np.exp(-((np.arange(size) - size // 2) ** 2) / (2.0 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


@dataclass
class SsimTerms:
    """Local statistics and the four SSIM factors

    map = (A1 * A2) / (B1 * B2) with A1 = 2 mu_a mu_b + C1, A2 = 2 cov + C2,
    B1 = mu_a^2 + mu_b^2 + C1 and B2 = var_a + var_b + C2. Global windows
    hold 0-d arrays and window=None.
    """
    mu_a: np.ndarray
    mu_b: np.ndarray
    var_a: np.ndarray
    var_b: np.ndarray
    cov: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    window: Optional[np.ndarray] = None

    @property
    def map(self) -> np.ndarray:
        return (self.a1 * self.a2) / (self.b1 * self.b2)

    @property
    def value(self) -> float:
        return float(np.mean(self.map))


def ssim_terms(a: np.ndarray, b: np.ndarray, config: SsimConfig = SsimConfig()) -> SsimTerms:
    a, b = _pair(a, b)
    if a.ndim != 2:
        raise DimMismatch(f"SSIM needs 2-D images, got shape {a.shape}")

    if config.window == SsimWindow.GLOBAL:
        window = None
        mu_a, mu_b = np.asarray(a.mean()), np.asarray(b.mean())
        var_a = np.asarray(np.mean((a - mu_a) ** 2))
        var_b = np.asarray(np.mean((b - mu_b) ** 2))
        cov = np.asarray(np.mean((a - mu_a) * (b - mu_b)))
    else:
        window = gaussian_window(min(GAUSSIAN_SIZE, *a.shape))

        def filt(x):
            return correlate2d(x, window, mode="valid")

        mu_a, mu_b = filt(a), filt(b)
        var_a = filt(a * a) - mu_a ** 2
        var_b = filt(b * b) - mu_b ** 2
        cov = filt(a * b) - mu_a * mu_b

    c1, c2 = config.c1, config.c2
    return SsimTerms(
        mu_a=mu_a, mu_b=mu_b, var_a=var_a, var_b=var_b, cov=cov,
        a1=2.0 * mu_a * mu_b + c1,
        a2=2.0 * cov + c2,
        b1=mu_a ** 2 + mu_b ** 2 + c1,
        b2=var_a + var_b + c2,
        window=window,
    )


def ssim(a: np.ndarray, b: np.ndarray, config: SsimConfig = SsimConfig()) -> float:
    """Mean SSIM (single value for the global window)"""
    return ssim_terms(a, b, config).value


def _to_8bit(image: np.ndarray) -> np.ndarray:
    image = np.asarray(image)
    if image.dtype == np.uint8:
        return image
    if np.issubdtype(image.dtype, np.floating):
        return np.clip(np.floor(image * 255.0 + 0.5), 0, 255).astype(np.uint8)
    return np.clip(image, 0, 255).astype(np.uint8)


def contour_distance(image: np.ndarray, config: CdConfig = CdConfig()) -> float:
    """Mean column of the first foreground pixel over rows that contain foreground"""
    image = np.asarray(image)
    if image.ndim != 2 or image.size == 0:
        raise ValidationError(f"Contour distance needs a nonempty 2-D image, got {image.shape}", field="image")

    foreground = _to_8bit(image) >= config.binarize_threshold
    rows = foreground.any(axis=1)
    if not rows.any():
        raise NoForeground()
    return float(np.mean(np.argmax(foreground[rows], axis=1)))


def cd_deviation(recon: np.ndarray, gt: np.ndarray, config: CdConfig = CdConfig()) -> float:
    """|Cd(recon) - Cd(gt)|"""
    try:
        cd_recon = contour_distance(recon, config)
    except NoForeground:
        raise NoForeground("recon")
    try:
        cd_gt = contour_distance(gt, config)
    except NoForeground:
        raise NoForeground("gt")
    return abs(cd_recon - cd_gt)


def _megabytes(n: int) -> str:
    return f"{n / 1e6:.2f} MB"


def data_volume_report(event_bytes: int, frame_bytes: int) -> DataVolumeReport:
    """Event recording size relative to the frame recording"""
    if frame_bytes <= 0:
        raise ValidationError(f"frame_bytes must be positive, got {frame_bytes}", field="frame_bytes")
    if event_bytes < 0:
        raise ValidationError(f"event_bytes must be nonnegative, got {event_bytes}", field="event_bytes")
    ratio = event_bytes / frame_bytes
    summary = f"{_megabytes(event_bytes)} vs {_megabytes(frame_bytes)} ({ratio * 100:.2f}%)"
    return DataVolumeReport(event_bytes=event_bytes, frame_bytes=frame_bytes, ratio=ratio, summary=summary)


def _mean(values: List[float]) -> Optional[float]:
    return float(np.mean(values)) if values else None


def aggregate(rows: List[SampleMetrics]) -> AggregateMetrics:
    """Means over rows; infinite PSNR and NoForeground rows are counted, not averaged"""
    finite_psnr = [r.psnr_db for r in rows if math.isfinite(r.psnr_db)]
    cds = [r.cd_deviation for r in rows if r.cd_deviation is not None]
    return AggregateMetrics(
        count=len(rows),
        psnr_db=_mean(finite_psnr),
        psnr_infinite=len(rows) - len(finite_psnr),
        ssim=_mean([r.ssim for r in rows]),
        cd_deviation=_mean(cds),
        cd_excluded=len(rows) - len(cds),
    )


class MetricTable:
    """Per-sample metric rows with CSV export and grouped summaries"""

    COLUMNS = list(SampleMetrics.model_fields)

    def __init__(self, split: str, modality: str):
        self.split = split
        self.modality = modality
        self.rows: List[SampleMetrics] = []

    def add(self, row: SampleMetrics) -> None:
        self.rows.append(row)

    def evaluate(self, recon: np.ndarray, gt: np.ndarray, *, sample_id: str, frame_index: int, digit: int,
                 group: str, ssim_config: SsimConfig = SsimConfig(),
                 cd_config: CdConfig = CdConfig()) -> SampleMetrics:
        """Score one reconstruction and record the row"""
        row = {
            "sample_id": sample_id,
            "frame_index": frame_index,
            "digit": digit,
            "group": group,
            "modality": self.modality,
            "psnr_db": psnr(recon, gt),
            "ssim": ssim(recon, gt, ssim_config),
        }
        missing = []
        try:
            row["cd_recon"] = contour_distance(recon, cd_config)
        except NoForeground:
            missing.append("recon")
        try:
            row["cd_gt"] = contour_distance(gt, cd_config)
        except NoForeground:
            missing.append("gt")
        if not missing:
            row["cd_deviation"] = abs(row["cd_recon"] - row["cd_gt"])
        else:
            row["no_foreground"] = "both" if len(missing) == 2 else missing[0]
            logger.warning(f"No foreground in {row['no_foreground']} for {sample_id}[{frame_index}]")

        metrics = SampleMetrics(**row)
        self.add(metrics)
        return metrics

    def to_csv(self) -> str:
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=self.COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow({k: ("" if v is None else v) for k, v in row.model_dump().items()})
        return buffer.getvalue()

    def _grouped(self, key: Callable[[SampleMetrics], Any]) -> Dict[str, AggregateMetrics]:
        groups: Dict[Any, List[SampleMetrics]] = defaultdict(list)
        for row in self.rows:
            groups[key(row)].append(row)
        return {str(k): aggregate(v) for k, v in sorted(groups.items())}

    def summary(self, include_samples: bool = False) -> MetricSummary:
        return MetricSummary(
            split=self.split,
            modality=self.modality,
            overall=aggregate(self.rows),
            per_digit=self._grouped(lambda r: r.digit),
            per_position=self._grouped(lambda r: r.frame_index),
            per_group=self._grouped(lambda r: r.group),
            samples=list(self.rows) if include_samples else [],
        )
