"""
Dataset commands: generation, verification and the summary report
"""

from typing import Optional

import typer

from cli.context import emit, state
from core.config import settings
from core.exceptions import ValidationError, VerificationFailed
from core.logging_config import get_logger
from schemas.dataset import TargetSource, TargetSourceKind, builtin_profiles
from services.pipeline import build_report, generate_dataset, load_manifest, plan_dataset, verify_manifest

logger = get_logger("dataset_cli")
router = typer.Typer(add_completion=False, help="Synthetic event and frame datasets")


@router.command("gen")
def gen(
    ctx: typer.Context,
    profile: Optional[str] = typer.Option(None, "--profile", help="smoke, desk or full"),
    dry_run: bool = typer.Option(False, "--dry-run", help="Only print the planned counts"),
    source: TargetSourceKind = typer.Option(TargetSourceKind.BUILTIN_BLOCK_DIGITS, "--source"),
    images: Optional[str] = typer.Option(None, "--images", help="IDX image archive"),
    labels: Optional[str] = typer.Option(None, "--labels", help="IDX label archive"),
    directory: Optional[str] = typer.Option(None, "--directory", help="Folder of <digit>_*.pgm|png files"),
    workers: Optional[int] = typer.Option(None, "--workers", min=1),
):
    """Generate a dataset (or plan it with --dry-run)"""
    cli = state(ctx)
    name = profile or settings.DEFAULT_PROFILE
    profiles = builtin_profiles()
    if name not in profiles:
        raise ValidationError(f"Unknown profile '{name}'", field="profile", details={"known": sorted(profiles)})

    plan = plan_dataset(profiles[name])
    if dry_run:
        emit(plan)
        return

    target_source = TargetSource(kind=source, images_path=images, labels_path=labels, directory=directory)
    manifest = generate_dataset(target_source, profiles[name], cli.config, cli.seed, cli.out,
                                workers or settings.WORKERS)
    emit({
        "out": str(cli.out),
        "plan": plan.model_dump(),
        "byte_totals": manifest.byte_totals.model_dump(),
    })


@router.command("verify")
def verify(ctx: typer.Context):
    """Check every file a manifest references"""
    cli = state(ctx)
    check = verify_manifest(load_manifest(cli.out), cli.out)
    emit(check)
    if not check.ok:
        raise VerificationFailed(check.problems)


def report(ctx: typer.Context):
    """Summarise the dataset, trained models and evaluations under --out"""
    emit(build_report(state(ctx).out))
