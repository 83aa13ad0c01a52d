"""
Model commands: training, reconstruction, evaluation and the E/F comparison
"""

from pathlib import Path
from typing import Optional

import numpy as np
import typer

from cli.context import emit, state
from cli.scene import load_target
from core.exceptions import ValidationError
from core.logging_config import get_logger
from schemas.dataset import Split
from schemas.scene import Pose, TargetFrame
from schemas.training import InitMode, Modality, TrainConfig
from services import pgm
from services.forward_model import diffuse_kernel, render_wall_frame, target_footprint
from services.metrics import psnr
from services.pipeline import load_manifest, run_compare_ef, run_eval, run_training
from services.reconstruct import load_model, predict, wiener_deconvolve
from services.storage import ArtifactStorage

logger = get_logger("models_cli")
router = typer.Typer(add_completion=False)


def _train_config(base: TrainConfig, epochs: Optional[int], init: Optional[InitMode],
                  lr: Optional[float]) -> TrainConfig:
    updates = {k: v for k, v in {"epochs": epochs, "init": init, "lr": lr}.items() if v is not None}
    return TrainConfig.model_validate({**base.model_dump(), **updates})


@router.command("train")
def train(
    ctx: typer.Context,
    modality: Modality = typer.Option(Modality.EVENTS, "--modality", help="E (events) or F (frames)"),
    epochs: Optional[int] = typer.Option(None, "--epochs", min=0),
    init: Optional[InitMode] = typer.Option(None, "--init"),
    lr: Optional[float] = typer.Option(None, "--lr"),
):
    """Train the linear reconstructor on the train split"""
    cli = state(ctx)
    manifest = load_manifest(cli.out)
    config = _train_config(manifest.config.train, epochs, init, lr)
    path, result = run_training(manifest, cli.out, config, modality)
    emit({
        "model": str(path),
        "modality": result.modality.value,
        "n_samples": result.n_samples,
        "epochs": len(result.loss_trace),
        "initial_loss": result.loss_trace[0] if result.loss_trace else None,
        "final_loss": result.final_loss,
    })


@router.command("reconstruct")
def reconstruct(
    ctx: typer.Context,
    method: str = typer.Option("wiener", "--method", help="wiener or model"),
    model: Optional[Path] = typer.Option(None, "--model", help="NLRW model for --method model"),
    input_pgm: Optional[Path] = typer.Option(None, "--input", help="Feature/frame PGM for --method model"),
    digit: int = typer.Option(0, "--digit"),
    variant: int = typer.Option(0, "--variant"),
    image: Optional[Path] = typer.Option(None, "--image"),
    lam: float = typer.Option(1e-8, "--lambda", help="Wiener regularizer, relative to the kernel DC gain"),
):
    """Invert one observation with the Wiener filter or a trained model"""
    cli = state(ctx)
    storage = ArtifactStorage(cli.out)

    if method == "model":
        if model is None or input_pgm is None:
            raise ValidationError("--method model needs --model and --input", field="method")
        reconstructor, _ = load_model(model)
        recon = predict(reconstructor, pgm.read_pgm_float(input_pgm))
        path = storage.save_bytes("reconstruct", "recon.pgm", pgm.encode_pgm(pgm.to_levels(recon)))
        emit({"path": str(path), "shape": list(recon.shape)})
        return

    geometry = cli.config.geometry
    target = load_target(digit, variant, image)
    wall = render_wall_frame(TargetFrame(target), geometry)
    footprint = target_footprint(geometry, Pose())
    recon = wiener_deconvolve(wall, diffuse_kernel(geometry), lam, footprint)
    scale = float(recon.max()) or 1.0
    path = storage.save_bytes("reconstruct", "wiener.pgm", pgm.encode_pgm(pgm.to_levels(recon, scale)))

    result = {"path": str(path), "shape": list(recon.shape), "lambda": lam}
    if recon.shape == target.shape:
        value = psnr(np.clip(recon, 0.0, 1.0), target)
        result["psnr_db"] = value if np.isfinite(value) else "inf"
    emit(result)


@router.command("eval")
def evaluate(
    ctx: typer.Context,
    model: Path = typer.Option(..., "--model"),
    split: Split = typer.Option(Split.TEST, "--split"),
    modality: Optional[Modality] = typer.Option(None, "--modality"),
):
    """Score a trained model on a split"""
    cli = state(ctx)
    summary = run_eval(load_manifest(cli.out), cli.out, model, split, modality)
    emit(summary)


@router.command("compare-ef")
def compare_ef(
    ctx: typer.Context,
    epochs: Optional[int] = typer.Option(None, "--epochs", min=0),
    split: Split = typer.Option(Split.TEST, "--split"),
):
    """Train and evaluate E and F models under the same configuration"""
    cli = state(ctx)
    manifest = load_manifest(cli.out)
    config = _train_config(manifest.config.train, epochs, None, None)
    emit(run_compare_ef(manifest, cli.out, config, split))
