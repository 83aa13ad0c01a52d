"""
End-to-end tests: dataset generation, verification, training, evaluation and the CLI
"""

import json
from pathlib import Path

import numpy as np
import pytest

import main
from core.exceptions import NotFoundError
from schemas.dataset import DatasetProfile, GroupProfile, PipelineConfig, Split, TargetSource, builtin_profiles
from schemas.scene import TrajectoryConfig
from schemas.training import Modality, TrainConfig
from services import pgm
from services.event_core import load_stream, validate
from services.pipeline import (
    build_report,
    generate_dataset,
    load_manifest,
    plan_dataset,
    run_compare_ef,
    run_eval,
    run_training,
    verify_manifest,
)

SMOKE_CONFIG = PipelineConfig(
    trajectory=TrajectoryConfig(duration_us=100_000),
    train=TrainConfig(epochs=3),
)


def _generate(root: Path, seed: int = 7):
    return generate_dataset(TargetSource(), builtin_profiles()["smoke"], SMOKE_CONFIG, seed, root)


@pytest.fixture(scope="module")
def smoke_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("smoke")
    _generate(root)
    return root


def _error_payload(err: str) -> dict:
    return json.loads([line for line in err.splitlines() if line.startswith("{")][-1])


# --- planning ---------------------------------------------------------------

def test_full_profile_counts():
    plan = plan_dataset(builtin_profiles()["full"])
    assert plan.frames == {"train": 3950, "val": 130, "test": 210}
    assert plan.targets["train"] == 130


def test_desk_profile_counts():
    plan = plan_dataset(builtin_profiles()["desk"])
    assert plan.targets == {"train": 20, "val": 10, "test": 10}
    assert plan.frames["train"] == 10 * 2 * 6


# --- generation -------------------------------------------------------------

def test_smoke_manifest_layout(smoke_root):
    manifest = load_manifest(smoke_root)
    assert [len(manifest.samples(s)) for s in Split] == [1, 1, 1]
    sample = manifest.samples(Split.TRAIN)[0]
    assert sample.id == "00000-train-d0-v00"
    assert len(sample.frames) == 1

    timestamps = json.loads((smoke_root / sample.wall_timestamps).read_text())["t_us"]
    assert len(timestamps) == 11
    assert manifest.byte_totals.events > 0


def test_smoke_manifest_verifies(smoke_root):
    manifest = load_manifest(smoke_root)
    check = verify_manifest(manifest, smoke_root)
    assert check.ok, check.problems
    assert check.samples == 3
    for sample in manifest.samples(Split.TEST):
        stream = load_stream(smoke_root / sample.events)
        assert validate(stream).ok
        assert len(stream) == sample.event_count


def test_pose_matches_trajectory_at_bin_end(smoke_root):
    manifest = load_manifest(smoke_root)
    trajectory = manifest.config.trajectory.build(manifest.config.geometry)
    for split in Split:
        for sample in manifest.samples(split):
            for pair in sample.frames:
                assert pair.pose == trajectory.pose_at(pair.bin_end_us)


def test_feature_and_frame_images(smoke_root):
    manifest = load_manifest(smoke_root)
    pair = manifest.samples(Split.VAL)[0].frames[0]
    feature = pgm.read_pgm_float(smoke_root / pair.feature)
    frame = pgm.read_pgm_float(smoke_root / pair.frame)
    gt = pgm.read_pgm_float(smoke_root / pair.ground_truth)
    assert feature.shape == frame.shape == (32, 32)
    assert gt.shape == (28, 28)
    assert frame.max() == 1.0
    assert 0.0 <= feature.min() and feature.max() <= 1.0


def test_verify_reports_broken_files(tmp_path):
    _generate(tmp_path)
    manifest = load_manifest(tmp_path)
    sample = manifest.samples(Split.TRAIN)[0]
    (tmp_path / sample.frames[0].feature).write_bytes(b"P5\n32 32\n")
    events = tmp_path / sample.events
    events.write_bytes(events.read_bytes()[:-3])

    check = verify_manifest(manifest, tmp_path)
    assert not check.ok
    assert any(sample.frames[0].feature in p for p in check.problems)
    assert any(sample.events in p for p in check.problems)


def test_generation_and_training_are_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    manifest_a, manifest_b = _generate(a), _generate(b)
    assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()
    for split in Split:
        for sample in manifest_a.samples(split):
            assert (a / sample.events).read_bytes() == (b / sample.events).read_bytes()

    path_a, _ = run_training(manifest_a, a, SMOKE_CONFIG.train)
    path_b, _ = run_training(manifest_b, b, SMOKE_CONFIG.train)
    assert path_a.read_bytes() == path_b.read_bytes()


def test_parallel_generation_matches_serial(tmp_path):
    serial = _generate(tmp_path / "serial")
    parallel = generate_dataset(TargetSource(), builtin_profiles()["smoke"], SMOKE_CONFIG, 7,
                                tmp_path / "parallel", workers=2)
    assert serial.model_dump() == parallel.model_dump()


# --- training and evaluation ------------------------------------------------

def test_training_writes_model_and_trace(tmp_path):
    manifest = _generate(tmp_path)
    path, result = run_training(manifest, tmp_path, TrainConfig(epochs=5), Modality.FRAMES)
    assert path == tmp_path / "models" / "linear_F.nlrw"
    assert len(result.loss_trace) == 5
    assert result.in_shape == (32, 32) and result.out_shape == (28, 28)
    assert (tmp_path / "models" / "linear_F.json").exists()


def test_eval_on_training_split(tmp_path):
    manifest = _generate(tmp_path)
    path, _ = run_training(manifest, tmp_path, TrainConfig(epochs=0, ridge_lambda=1e-6))
    summary = run_eval(manifest, tmp_path, path, Split.TRAIN)
    assert summary.overall.count == 1
    assert summary.modality == "E"
    assert summary.overall.lpips == "not available"

    pair = manifest.samples(Split.TRAIN)[0].frames[0]
    recon = Path(pair.ground_truth).parent / "recon_E_000.pgm"
    assert (tmp_path / recon).exists()
    assert (tmp_path / recon.with_suffix(".png")).exists()
    assert (tmp_path / "eval" / "train_E" / "metrics.csv").exists()

    # a single sample is fit (almost) exactly
    gt = pgm.read_pgm_float(tmp_path / pair.ground_truth)
    assert np.abs(pgm.read_pgm_float(tmp_path / recon) - gt).max() < 1e-3


def test_eval_missing_model(smoke_root, tmp_path):
    with pytest.raises(NotFoundError):
        run_eval(load_manifest(smoke_root), smoke_root, tmp_path / "missing.nlrw")


def test_compare_ef_report(tmp_path):
    manifest = _generate(tmp_path)
    report = run_compare_ef(manifest, tmp_path, TrainConfig(epochs=2))
    assert {(row.digit, row.modality) for row in report.rows} == {("0", "E"), ("0", "F")}
    assert report.data_volume.ratio > 0.0
    assert set(report.overall) == {"E", "F"}
    assert [(row.group, row.modality, row.count) for row in report.group_rows] == [
        ("test", "E", 1), ("test", "F", 1)]
    assert (tmp_path / "compare" / "report.json").exists()

    summary = build_report(tmp_path)
    assert summary["frames"] == {"train": 1, "val": 1, "test": 1}
    assert set(summary["models"]) == {"linear_E", "linear_F"}
    assert set(summary["evaluations"]) == {"test_E", "test_F"}
    assert "samples" not in json.loads((tmp_path / "eval" / "test_E" / "summary.json").read_text())


def test_compare_ef_keeps_test_groups_and_positions_apart(tmp_path):
    profile = DatasetProfile(name="two-tests", groups=[
        GroupProfile(name="train", split=Split.TRAIN, n_per_digit=1, digits=[0, 1]),
        GroupProfile(name="test_a", split=Split.TEST, n_per_digit=1, n_positions=2, digits=[0], variant_offset=1),
        GroupProfile(name="test_b", split=Split.TEST, n_per_digit=1, digits=[1], variant_offset=1),
    ])
    manifest = generate_dataset(TargetSource(), profile, SMOKE_CONFIG, 3, tmp_path)
    report = run_compare_ef(manifest, tmp_path, TrainConfig(epochs=2))

    assert [(row.digit, row.modality, row.count) for row in report.rows] == [
        ("0", "E", 2), ("0", "F", 2), ("1", "E", 1), ("1", "F", 1)]
    assert [(row.group, row.modality, row.count) for row in report.group_rows] == [
        ("test_a", "E", 2), ("test_a", "F", 2), ("test_b", "E", 1), ("test_b", "F", 1)]
    assert [(row.group, row.position, row.modality) for row in report.position_rows] == [
        ("test_a", 0, "E"), ("test_a", 0, "F"), ("test_a", 1, "E"), ("test_a", 1, "F"),
        ("test_b", 0, "E"), ("test_b", 0, "F")]
    assert all(row.count == 1 and row.digit is None for row in report.position_rows)

    saved = json.loads((tmp_path / "compare" / "report.json").read_text())
    assert {row["group"] for row in saved["group_rows"]} == {"test_a", "test_b"}


# --- CLI --------------------------------------------------------------------

def test_cli_dry_run(tmp_path, capsys):
    code = main.run(["--out", str(tmp_path), "dataset", "gen", "--profile", "full", "--dry-run"])
    assert code == 0
    plan = json.loads(capsys.readouterr().out)
    assert plan["frames"] == {"train": 3950, "val": 130, "test": 210}


def test_cli_missing_manifest_is_a_clean_error(tmp_path, capsys):
    code = main.run(["--out", str(tmp_path), "dataset", "verify"])
    assert code == 2
    payload = _error_payload(capsys.readouterr().err)
    assert payload["error"]["code"] == "NOT_FOUND"


def test_cli_failed_verification_reports_problems(tmp_path, capsys):
    manifest = _generate(tmp_path)
    sample = manifest.samples(Split.TEST)[0]
    (tmp_path / sample.frames[0].frame).unlink()

    code = main.run(["--out", str(tmp_path), "dataset", "verify"])
    assert code == 2
    captured = capsys.readouterr()
    assert json.loads(captured.out)["ok"] is False
    payload = _error_payload(captured.err)
    assert payload["error"]["code"] == "VERIFICATION_FAILED"
    assert any(sample.frames[0].frame in p for p in payload["error"]["details"]["problems"])


def test_cli_usage_errors_are_clean(tmp_path, capsys):
    code = main.run(["--out", str(tmp_path), "reconstruct", "--method", "model"])
    assert code == 2
    assert _error_payload(capsys.readouterr().err)["error"]["code"] == "VALIDATION_ERROR"

    code = main.run(["--out", str(tmp_path), "eval"])
    assert code == 2
    payload = _error_payload(capsys.readouterr().err)
    assert payload["error"]["code"] == "USAGE_ERROR"
    assert "--model" in payload["error"]["message"]


def test_cli_invalid_config(tmp_path, capsys):
    config = tmp_path / "bad.json"
    config.write_text(json.dumps({"geometry": {"wall_res": 0}}))
    code = main.run(["--out", str(tmp_path), "--config", str(config), "kernel"])
    assert code == 2
    assert _error_payload(capsys.readouterr().err)["error"]["code"] == "VALIDATION_ERROR"


def test_cli_kernel_with_partial_config(tmp_path, capsys):
    config = tmp_path / "small.json"
    config.write_text(json.dumps({"geometry": {"wall_res": 32}}))
    code = main.run(["--out", str(tmp_path), "--config", str(config), "kernel"])
    assert code == 0
    result = json.loads(capsys.readouterr().out)
    assert result["shape"] == [32, 32]
    assert pgm.read_pgm(tmp_path / "kernel" / "kernel.pgm").max() == 65535


def test_cli_simulate_and_featurize(tmp_path, capsys):
    config = tmp_path / "short.json"
    config.write_text(json.dumps({"trajectory": {"duration_us": 50_000}}))
    base = ["--out", str(tmp_path), "--config", str(config)]

    assert main.run(base + ["simulate", "--digit", "7", "--format", "csv"]) == 0
    simulated = json.loads(capsys.readouterr().out)
    assert simulated["stream"]["width"] == 128

    events = tmp_path / "events" / "events.csv"
    code = main.run(base + ["featurize", "--events", str(events), "--width", "128", "--height", "128",
                            "--bins", "3"])
    if simulated["stream"]["count"] == 0:
        assert code == 2
        return
    assert code == 0
    featurized = json.loads(capsys.readouterr().out)
    assert len(featurized["bins"]) == 3
    assert (tmp_path / "features" / "ts_002_c0.pgm").exists()


# --- desk experiment --------------------------------------------------------

@pytest.mark.slow
def test_desk_experiment(tmp_path):
    config = PipelineConfig()
    manifest = generate_dataset(TargetSource(), builtin_profiles()["desk"], config, 0, tmp_path, workers=2)
    assert manifest.frame_count(Split.TRAIN) == 120
    assert verify_manifest(manifest, tmp_path).ok

    report = run_compare_ef(manifest, tmp_path, config.train)
    events = report.overall["E"]
    assert events.count == 60
    assert events.psnr_db >= 12.0
    assert events.cd_deviation <= 3.0
    assert {row.digit for row in report.rows} == {str(d) for d in range(10)}
    assert report.data_volume.ratio < 1.0
