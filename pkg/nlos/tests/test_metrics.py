"""
Tests for PSNR, SSIM, contour distance, data volume and metric tables
"""

import csv
import io
import math

import numpy as np
import pytest

from core.exceptions import DimMismatch, NoForeground, ValidationError
from schemas.metrics import CdConfig, SampleMetrics, SsimConfig, SsimWindow
from services.metrics import (
    MetricTable,
    aggregate,
    cd_deviation,
    contour_distance,
    data_volume_report,
    gaussian_window,
    psnr,
    ssim,
)


def _bar(column: int, shape=(10, 20)) -> np.ndarray:
    image = np.zeros(shape)
    image[:, column] = 1.0
    return image


def test_psnr_closed_forms():
    a = np.full((8, 8), 100.0)
    assert psnr(a, a + 16.0, peak=255.0) == pytest.approx(24.05, abs=0.01)
    b = np.full((8, 8), 0.3)
    assert psnr(b, b + 0.1) == pytest.approx(20.0)
    assert psnr(b, b) == math.inf


def test_psnr_symmetric_and_monotone(rng):
    a = rng.uniform(0.0, 1.0, (16, 16))
    noise = rng.uniform(-1.0, 1.0, (16, 16))
    values = [psnr(a, a + amplitude * noise) for amplitude in (0.01, 0.05, 0.1)]
    assert values[0] > values[1] > values[2]
    b = a + 0.05 * noise
    assert psnr(a, b) == psnr(b, a)
    with pytest.raises(DimMismatch):
        psnr(a, a[:, :-1])


def test_ssim_closed_forms(rng):
    a = np.full((8, 8), 0.5)
    b = np.full((8, 8), 0.25)
    assert ssim(a, b) == pytest.approx(0.8001, abs=5e-4)
    c = rng.uniform(0.0, 1.0, (16, 16))
    assert ssim(c, c) == 1.0
    assert ssim(np.full((16, 16), 0.5), c) < 1.0


def test_ssim_global_translation_invariant(rng):
    a = rng.uniform(0.0, 1.0, (16, 16))
    b = rng.uniform(0.0, 1.0, (16, 16))
    shifted = ssim(np.roll(a, 3, axis=1), np.roll(b, 3, axis=1))
    assert shifted == pytest.approx(ssim(a, b), rel=1e-12)


def test_gaussian_window_ssim(rng):
    a = rng.uniform(0.0, 1.0, (20, 20))
    config = SsimConfig(window=SsimWindow.GAUSSIAN)
    assert ssim(a, a, config) == pytest.approx(1.0)
    assert -1.0 <= ssim(a, rng.uniform(0.0, 1.0, (20, 20)), config) < 1.0
    window = gaussian_window(11)
    assert window.sum() == pytest.approx(1.0)
    assert window[5, 5] == window.max()


def test_contour_distance_of_bars():
    assert contour_distance(_bar(5)) == 5.0
    assert contour_distance(_bar(0)) == 0.0
    with pytest.raises(NoForeground):
        contour_distance(np.zeros((4, 4)))


def test_contour_distance_translation_covariant(rng):
    image = np.zeros((12, 24))
    image[2:10, 3:9] = rng.uniform(0.6, 1.0, (8, 6))
    base = contour_distance(image)
    for k in (1, 4, 9):
        shifted = np.zeros_like(image)
        shifted[:, k:] = image[:, :-k]
        assert contour_distance(shifted) == base + k


def test_contour_distance_threshold_and_8bit_input():
    image = np.zeros((3, 6), dtype=np.uint8)
    image[0, 2] = 127
    image[1, 4] = 128
    assert contour_distance(image) == 4.0
    assert contour_distance(image, CdConfig(binarize_threshold=100)) == 3.0
    with pytest.raises(ValidationError):
        contour_distance(np.zeros(5))


def test_cd_deviation_tags_the_empty_image():
    assert cd_deviation(_bar(5), _bar(9)) == 4.0
    assert cd_deviation(_bar(7), _bar(7)) == 0.0
    with pytest.raises(NoForeground) as exc:
        cd_deviation(np.zeros((10, 20)), _bar(3))
    assert exc.value.which == "recon"
    with pytest.raises(NoForeground) as exc:
        cd_deviation(_bar(3), np.zeros((10, 20)))
    assert exc.value.which == "gt"


def test_data_volume_report():
    report = data_volume_report(5_960_000, 291_510_000)
    assert report.ratio == pytest.approx(0.0204, abs=1e-4)
    assert report.summary == "5.96 MB vs 291.51 MB (2.04%)"
    assert data_volume_report(10, 10).ratio == 1.0
    assert data_volume_report(20, 1000).ratio == 0.02
    with pytest.raises(ValidationError):
        data_volume_report(1, 0)


def _row(sample_id, digit, psnr_db, ssim_value, cd=None, frame_index=0):
    return SampleMetrics(sample_id=sample_id, frame_index=frame_index, digit=digit, group="test",
                         modality="E", psnr_db=psnr_db, ssim=ssim_value, cd_deviation=cd)


def test_aggregate_excludes_infinite_psnr_and_missing_cd():
    rows = [_row("a", 1, 20.0, 0.5, 2.0), _row("b", 1, 30.0, 0.7), _row("c", 2, math.inf, 1.0, 0.0)]
    agg = aggregate(rows)
    assert agg.count == 3
    assert agg.psnr_db == pytest.approx(25.0)
    assert agg.psnr_infinite == 1
    assert agg.ssim == pytest.approx(0.7333333333)
    assert agg.cd_deviation == pytest.approx(1.0)
    assert agg.cd_excluded == 1
    assert agg.lpips == "not available"


def test_metric_table_summary_matches_csv():
    table = MetricTable("test", "E")
    gt = _bar(5)
    for k, recon in enumerate((_bar(6), _bar(5) * 0.9, np.zeros((10, 20)))):
        table.evaluate(recon, gt, sample_id=f"s{k}", frame_index=k, digit=k % 2, group="test")

    rows = list(csv.DictReader(io.StringIO(table.to_csv())))
    assert len(rows) == 3
    assert rows[2]["no_foreground"] == "recon" and rows[2]["cd_deviation"] == ""

    summary = table.summary()
    psnr_values = [float(r["psnr_db"]) for r in rows]
    assert summary.overall.psnr_db == pytest.approx(np.mean(psnr_values))
    assert summary.overall.cd_deviation == pytest.approx(np.mean([1.0, 0.0]))
    assert summary.overall.cd_excluded == 1
    assert sorted(summary.per_digit) == ["0", "1"]
    assert summary.per_digit["0"].count == 2
    assert sorted(summary.per_position) == ["0", "1", "2"]


def test_metric_table_names_every_image_without_foreground():
    table = MetricTable("test", "F")
    blank = np.zeros((10, 20))
    gt_only = table.evaluate(_bar(5), blank, sample_id="a", frame_index=0, digit=1, group="test")
    both = table.evaluate(blank, blank, sample_id="b", frame_index=0, digit=1, group="test")
    assert gt_only.no_foreground == "gt" and gt_only.cd_recon is not None
    assert both.no_foreground == "both"
    assert both.cd_recon is None and both.cd_gt is None and both.cd_deviation is None
    assert table.summary().overall.cd_excluded == 2
