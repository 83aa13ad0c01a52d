"""
State shared by every command: seed, pipeline configuration and output root
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import typer

from core.config import settings
from core.exceptions import NotFoundError, StorageError
from schemas.dataset import PipelineConfig


@dataclass
class CliState:
    seed: int
    config: PipelineConfig
    out: Path

    @classmethod
    def create(cls, seed: Optional[int], config_path: Optional[Path], out: Optional[Path]) -> "CliState":
        config = PipelineConfig()
        if config_path is not None:
            if not config_path.exists():
                raise NotFoundError("config file", str(config_path))
            try:
                text = config_path.read_text(encoding="utf-8")
            except OSError as e:
                raise StorageError("read", f"Failed to read {config_path}: {e}")
            config = PipelineConfig.model_validate_json(text)
        return cls(
            seed=settings.DEFAULT_SEED if seed is None else seed,
            config=config,
            out=Path(out or settings.OUT_DIR),
        )


def state(ctx: typer.Context) -> CliState:
    """The CliState installed by the root callback"""
    if not isinstance(ctx.obj, CliState):
        ctx.obj = CliState.create(None, None, None)
    return ctx.obj


def emit(payload: Any) -> None:
    """Print a command result as JSON on stdout"""
    if hasattr(payload, "model_dump"):
        payload = payload.model_dump(mode="json")
    typer.echo(json.dumps(payload, indent=2, sort_keys=True, default=str))
