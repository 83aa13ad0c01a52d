"""
End-to-end orchestration: dataset synthesis, training, evaluation and reports
"""

import json
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, Union

import numpy as np
from PIL import Image
from pydantic import BaseModel

from core.exceptions import NlosError, ValidationError
from core.logging_config import get_logger
from schemas.dataset import (
    ByteTotals,
    DatasetManifest,
    DatasetPlan,
    DatasetProfile,
    FramePair,
    GroupProfile,
    ManifestCheck,
    PipelineConfig,
    SampleRecord,
    Split,
    TargetSource,
)
from schemas.metrics import ComparisonReport, ComparisonRow, MetricSummary, SampleMetrics
from schemas.scene import Pose, TargetFrame, WallFrame
from schemas.training import Modality, TrainConfig, TrainingResult
from services import event_core, pgm
from services.event_sim import simulate_events
from services.features import bin_ends, downsample, voxel_grid_features
from services.forward_model import ground_truth_frame, render_video, render_wall_frame
from services.metrics import MetricTable, aggregate, data_volume_report
from services.reconstruct import encode_model, load_model, predict, train_adam
from services.storage import ArtifactStorage, ManifestStorage, ModelStorage
from services.targets import target_library

logger = get_logger("pipeline")

FEATURE_SCALE = 65535.0


# --- planning ---------------------------------------------------------------

class SampleTask(BaseModel):
    """Everything one worker needs to synthesise one sample"""
    index: int
    id: str
    group: GroupProfile
    source: TargetSource
    digit: int
    variant: int
    n_positions: int
    config: PipelineConfig
    seed: int
    root: str


def plan_dataset(profile: DatasetProfile) -> DatasetPlan:
    """Per-split target and frame counts implied by a profile"""
    targets = {split.value: 0 for split in Split}
    frames = {split.value: 0 for split in Split}
    for group in profile.groups:
        targets[group.split.value] += group.n_targets
        frames[group.split.value] += group.frame_count
    return DatasetPlan(profile=profile.name, targets=targets, frames=frames)


def _tasks(source: TargetSource, profile: DatasetProfile, config: PipelineConfig,
           seed: int, root: Path) -> List[SampleTask]:
    tasks = []
    for group in profile.groups:
        target_index = 0
        for n in range(group.n_per_digit):
            for digit in group.digits:
                index = len(tasks)
                variant = group.variant_offset + n
                tasks.append(SampleTask(
                    index=index,
                    id=f"{index:05d}-{group.name}-d{digit}-v{variant:02d}",
                    group=group,
                    source=group.source or source,
                    digit=digit,
                    variant=variant,
                    n_positions=group.positions_for(target_index),
                    config=config,
                    seed=seed,
                    root=str(root),
                ))
                target_index += 1
    return tasks


# --- generation -------------------------------------------------------------

def _write_pgm(storage: ArtifactStorage, collection: str, name: str, image: np.ndarray,
               scale: float = 1.0) -> Tuple[str, int]:
    payload = pgm.encode_pgm(pgm.to_levels(image, scale))
    path = storage.save_bytes(collection, name, payload)
    return storage.relative(path), len(payload)


def _synthesise(task: SampleTask) -> Tuple[SampleRecord, ByteTotals]:
    config = task.config
    geometry = config.geometry
    storage = ArtifactStorage(task.root)
    base = f"samples/{task.id}"
    rng = np.random.default_rng([task.seed, task.index])

    image = target_library(task.source).get(task.digit, task.variant)
    target_path, target_bytes = _write_pgm(storage, base, "target.pgm", image)

    jitter = config.trajectory.vertical_jitter_m
    dy = float(rng.uniform(-jitter, jitter)) if jitter > 0 else 0.0
    trajectory = config.trajectory.build(geometry, dy)

    # wall video, stored relative to its sequence peak
    video = render_video(image, trajectory, geometry, config.trajectory.frame_rate)
    wall_scale = max(frame.image.max() for frame in video) or 1.0
    wall_bytes = 0
    for k, frame in enumerate(video):
        wall_bytes += _write_pgm(storage, f"{base}/wall", f"frame_{k:04d}.pgm", frame.image, wall_scale)[1]
    timestamps = storage.save_json(f"{base}/wall", "timestamps.json", {"t_us": [f.t_us for f in video]})

    sim_config = config.event_sim
    if sim_config.threshold_jitter > 0:
        sim_config = sim_config.model_copy(update={"seed": int(rng.integers(2 ** 31))})
    normalised = [WallFrame(f.t_us, f.image / wall_scale) for f in video]
    stream = simulate_events(normalised, sim_config)
    events_blob = event_core.write_binary(stream)
    events_path = storage.save_bytes(base, "events.nevt", events_blob)

    span = (trajectory.t_start, trajectory.t_end)
    surfaces = voxel_grid_features(stream, task.n_positions, config.time_surface, span=span)
    ends = bin_ends(span[0], span[1], task.n_positions)

    pairs, feature_bytes, frame_bytes, gt_bytes = [], 0, 0, 0
    for k, (surface, end_us) in enumerate(zip(surfaces, ends)):
        pose = trajectory.pose_at(end_us)

        feature = np.clip(downsample(surface.image, config.input_res), 0.0, 1.0)
        feature_path, size = _write_pgm(storage, f"{base}/features", f"e_{k:03d}.pgm", feature)
        feature_bytes += size

        wall = render_wall_frame(TargetFrame(image, pose), geometry, end_us).image
        small = downsample(wall, config.input_res)
        frame_scale = float(small.max()) or 1.0
        frame_path, size = _write_pgm(storage, f"{base}/frames", f"f_{k:03d}.pgm", small, frame_scale)
        frame_bytes += size

        gt_path, size = _write_pgm(storage, f"{base}/gt", f"gt_{k:03d}.pgm", ground_truth_frame(image, pose, geometry))
        gt_bytes += size

        pairs.append(FramePair(index=k, bin_end_us=end_us, pose=pose, ground_truth=gt_path,
                               feature=feature_path, frame=frame_path, frame_scale=frame_scale,
                               feature_scale=FEATURE_SCALE))

    record = SampleRecord(
        id=task.id,
        digit=task.digit,
        group=task.group.name,
        split=task.group.split,
        variant=task.variant,
        poses=[p.pose for p in pairs],
        target=target_path,
        wall_frames=f"{base}/wall",
        wall_timestamps=storage.relative(timestamps),
        wall_scale=float(wall_scale),
        events=storage.relative(events_path),
        event_count=len(stream),
        frames=pairs,
    )
    totals = ByteTotals(events=len(events_blob), wall_frames=wall_bytes, features=feature_bytes,
                        frames=frame_bytes, ground_truth=gt_bytes + target_bytes)
    return record, totals


def _generate_sample(task: SampleTask) -> Tuple[SampleRecord, ByteTotals]:
    try:
        return _synthesise(task)
    except NlosError as e:
        raise e.with_context(sample_id=task.id)


def generate_dataset(source: TargetSource, profile: DatasetProfile, config: PipelineConfig,
                     seed: int, out_dir: Union[str, Path], workers: int = 1) -> DatasetManifest:
    """Synthesise every sample of a profile and write the manifest"""
    root = Path(out_dir)
    storage = ArtifactStorage(root)
    tasks = _tasks(source, profile, config, seed, root)
    logger.info(f"Generating {len(tasks)} samples for profile '{profile.name}' into {root} (workers={workers})")

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_generate_sample, tasks))
    else:
        results = [_generate_sample(task) for task in tasks]

    splits: Dict[Split, List[SampleRecord]] = {split: [] for split in Split}
    totals = ByteTotals()
    for record, sample_totals in sorted(results, key=lambda r: r[0].id):
        splits[record.split].append(record)
        totals = totals.add(sample_totals)

    manifest = DatasetManifest(profile=profile, source=source, config=config, seed=seed,
                               splits=splits, byte_totals=totals)
    ManifestStorage(storage).save_manifest(manifest)
    logger.info(
        f"Dataset ready: " + ", ".join(f"{s.value}={manifest.frame_count(s)} frames" for s in Split)
        + f"; events {totals.events} B vs wall frames {totals.wall_frames} B"
    )
    return manifest


def load_manifest(root: Union[str, Path]) -> DatasetManifest:
    return ManifestStorage(ArtifactStorage(root)).load_manifest()


# --- verification -----------------------------------------------------------

def verify_manifest(manifest: DatasetManifest, root: Union[str, Path]) -> ManifestCheck:
    """Every referenced file exists and parses, streams validate, E/F frames pair up"""
    root = Path(root)
    problems: List[str] = []
    files = 0

    def check_pgm(rel: str, owner: str) -> None:
        nonlocal files
        files += 1
        try:
            pgm.read_pgm(root / rel)
        except NlosError as e:
            problems.append(f"{owner}: {rel}: {e.message}")

    geometry = manifest.config.geometry
    for split in Split:
        for sample in manifest.samples(split):
            check_pgm(sample.target, sample.id)

            files += 1
            try:
                stream = event_core.load_stream(root / sample.events)
                report = event_core.validate(stream)
                if not report.ok:
                    problems.append(f"{sample.id}: events invalid at {report.index}: {report.reason}")
                elif len(stream) != sample.event_count:
                    problems.append(f"{sample.id}: {len(stream)} events, manifest says {sample.event_count}")
            except NlosError as e:
                problems.append(f"{sample.id}: {sample.events}: {e.message}")

            files += 1
            try:
                timestamps = json.loads((root / sample.wall_timestamps).read_text())["t_us"]
                for k in range(len(timestamps)):
                    check_pgm(f"{sample.wall_frames}/frame_{k:04d}.pgm", sample.id)
            except (OSError, ValueError, KeyError) as e:
                problems.append(f"{sample.id}: {sample.wall_timestamps}: {e}")

            if len(sample.poses) != len(sample.frames):
                problems.append(f"{sample.id}: {len(sample.poses)} poses for {len(sample.frames)} frame pairs")
            trajectory = manifest.config.trajectory.build(geometry, sample.poses[0].dy_m if sample.poses else 0.0)
            for pair in sample.frames:
                check_pgm(pair.feature, sample.id)
                check_pgm(pair.frame, sample.id)
                check_pgm(pair.ground_truth, sample.id)
                if trajectory.pose_at(pair.bin_end_us) != pair.pose:
                    problems.append(f"{sample.id}: frame {pair.index} pose differs from the trajectory")

    n_samples = sum(len(manifest.samples(s)) for s in Split)
    for problem in problems:
        logger.warning(problem)
    return ManifestCheck(ok=not problems, samples=n_samples, files_checked=files, problems=problems)


# --- training and evaluation ------------------------------------------------

def _input_path(pair: FramePair, modality: Modality) -> str:
    return pair.feature if modality == Modality.EVENTS else pair.frame


def load_pairs(manifest: DatasetManifest, root: Union[str, Path], split: Split,
               modality: Modality) -> Tuple[np.ndarray, np.ndarray, List[Tuple[SampleRecord, FramePair]]]:
    """Stacked (inputs, ground truths) of a split plus the records they came from"""
    root = Path(root)
    inputs, targets, owners = [], [], []
    for sample in manifest.samples(split):
        for pair in sample.frames:
            inputs.append(pgm.read_pgm_float(root / _input_path(pair, modality)).reshape(-1))
            targets.append(pgm.read_pgm_float(root / pair.ground_truth).reshape(-1))
            owners.append((sample, pair))
    if not owners:
        raise ValidationError(f"Split '{Split(split).value}' has no frames", field="split")
    return np.stack(inputs), np.stack(targets), owners


def model_name(modality: Modality) -> str:
    return f"linear_{Modality(modality).value}"


def run_training(manifest: DatasetManifest, root: Union[str, Path], train_config: TrainConfig,
                 modality: Modality = Modality.EVENTS) -> Tuple[Path, TrainingResult]:
    """Train the linear reconstructor on the train split and store it under models/"""
    res = manifest.config.input_res
    canvas = manifest.config.geometry.canvas_res
    x, y, _ = load_pairs(manifest, root, Split.TRAIN, modality)
    logger.info(f"Training {Modality(modality).value} model on {len(x)} pairs for {train_config.epochs} epochs")

    model, trace = train_adam(x, y, train_config, (res, res), (canvas, canvas), manifest.config.ssim.model_copy(
        update={"window": train_config.ssim_window}))
    result = TrainingResult(
        config=train_config,
        modality=modality,
        in_shape=(res, res),
        out_shape=(canvas, canvas),
        n_samples=len(x),
        loss_trace=trace,
        final_loss=trace[-1] if trace else 0.0,
    )
    path = ModelStorage(ArtifactStorage(root)).save_model(model_name(modality), encode_model(model), result)
    return path, result


def _save_preview(storage: ArtifactStorage, collection: str, name: str, image: np.ndarray) -> None:
    levels = pgm.to_levels(image, 1.0, maxval=255)
    path = storage.path(collection, name)
    Image.fromarray(levels).save(path, format="PNG")


def run_eval(manifest: DatasetManifest, root: Union[str, Path], model_path: Union[str, Path],
             split: Split = Split.TEST, modality: Optional[Modality] = None,
             include_samples: bool = False) -> MetricSummary:
    """Score a model on a split; writes the CSV, the summary and the reconstructions"""
    root = Path(root)
    storage = ArtifactStorage(root)
    model, result = load_model(model_path)
    modality = Modality(modality or (result.modality if result else Modality.EVENTS))
    split = Split(split)

    x, y, owners = load_pairs(manifest, root, split, modality)
    table = MetricTable(split.value, modality.value)
    for features, gt, (sample, pair) in zip(x, y, owners):
        recon = predict(model, features)
        truth = gt.reshape(model.out_shape)
        table.evaluate(recon, truth, sample_id=sample.id, frame_index=pair.index, digit=sample.digit,
                       group=sample.group, ssim_config=manifest.config.ssim, cd_config=manifest.config.cd)
        collection = str(Path(pair.ground_truth).parent.as_posix())
        _write_pgm(storage, collection, f"recon_{modality.value}_{pair.index:03d}.pgm", recon)
        _save_preview(storage, collection, f"recon_{modality.value}_{pair.index:03d}.png", recon)

    summary = table.summary(include_samples)
    collection = f"eval/{split.value}_{modality.value}"
    storage.save_text(collection, "metrics.csv", table.to_csv())
    storage.save_json(collection, "summary.json", summary.model_dump(mode="json", exclude={"samples"}))
    overall = summary.overall
    logger.info(f"Eval {split.value}/{modality.value}: {overall.count} frames, PSNR {overall.psnr_db}, "
                f"SSIM {overall.ssim}, Cd deviation {overall.cd_deviation} ({overall.cd_excluded} excluded)")
    return summary


def _comparison_rows(summaries: Dict[Modality, MetricSummary],
                     labels: Callable[[SampleMetrics], Tuple[Tuple[str, Any], ...]]) -> List[ComparisonRow]:
    """One row per (slice, modality); a modality with no frames in a slice gets count 0"""
    slices: Dict[tuple, Dict[Modality, List[SampleMetrics]]] = defaultdict(lambda: defaultdict(list))
    for modality, summary in summaries.items():
        for sample in summary.samples:
            slices[labels(sample)][modality].append(sample)

    rows = []
    for key in sorted(slices):
        fields = dict(key)
        if "digit" in fields:
            fields["digit"] = str(fields["digit"])
        for modality in summaries:
            agg = aggregate(slices[key][modality])
            rows.append(ComparisonRow(modality=modality.value, count=agg.count, psnr_db=agg.psnr_db, ssim=agg.ssim,
                                      cd_deviation=agg.cd_deviation, **fields))
    return rows


def run_compare_ef(manifest: DatasetManifest, root: Union[str, Path], train_config: TrainConfig,
                   split: Split = Split.TEST) -> ComparisonReport:
    """Same model and config on event features (E) and frames (F), per digit, test group and position"""
    summaries = {}
    for modality in (Modality.EVENTS, Modality.FRAMES):
        path, _ = run_training(manifest, root, train_config, modality)
        summaries[modality] = run_eval(manifest, root, path, split, modality, include_samples=True)

    totals = manifest.byte_totals
    report = ComparisonReport(
        split=Split(split).value,
        rows=_comparison_rows(summaries, lambda r: (("digit", r.digit),)),
        group_rows=_comparison_rows(summaries, lambda r: (("group", r.group),)),
        position_rows=_comparison_rows(summaries, lambda r: (("group", r.group), ("position", r.frame_index))),
        overall={m.value: s.overall for m, s in summaries.items()},
        data_volume=data_volume_report(totals.events, totals.wall_frames),
    )
    ArtifactStorage(root).save_json("compare", "report.json", report.model_dump(mode="json"))
    logger.info(f"E vs F on {report.split}: data volume {report.data_volume.summary}")
    return report


def build_report(root: Union[str, Path]) -> Dict[str, Any]:
    """Manifest bookkeeping plus whatever models and evaluations exist under root"""
    storage = ArtifactStorage(root)
    manifest = ManifestStorage(storage).load_manifest()
    totals = manifest.byte_totals

    report: Dict[str, Any] = {
        "profile": manifest.profile.name,
        "seed": manifest.seed,
        "samples": {s.value: len(manifest.samples(s)) for s in Split},
        "frames": {s.value: manifest.frame_count(s) for s in Split},
        "byte_totals": totals.model_dump(),
        "data_volume": data_volume_report(totals.events, totals.wall_frames).model_dump()
        if totals.wall_frames > 0 else None,
        "models": {},
        "evaluations": {},
    }
    for name in storage.list_items("models"):
        result = TrainingResult.model_validate(storage.load_json("models", name))
        report["models"][Path(name).stem] = {"modality": result.modality.value, "epochs": result.config.epochs,
                                             "n_samples": result.n_samples, "final_loss": result.final_loss}
    eval_dir = storage.base_dir / "eval"
    if eval_dir.is_dir():
        for run in sorted(p.name for p in eval_dir.iterdir() if (p / "summary.json").exists()):
            report["evaluations"][run] = storage.load_json(f"eval/{run}", "summary.json")["overall"]
    if storage.exists("compare", "report.json"):
        report["comparison"] = storage.load_json("compare", "report.json")
    return report
