"""
Root command for the EventNLOS toolkit
"""

from pathlib import Path
from typing import Optional

import typer

from cli import dataset, events, models, scene
from cli.context import CliState

app = typer.Typer(
    add_completion=False,
    no_args_is_help=True,
    help="Synthetic event-based passive NLOS imaging",
)


@app.callback()
def root(
    ctx: typer.Context,
    seed: Optional[int] = typer.Option(None, "--seed", help="Dataset seed (default DEFAULT_SEED)"),
    config: Optional[Path] = typer.Option(None, "--config", help="PipelineConfig JSON, partial allowed"),
    out: Optional[Path] = typer.Option(None, "--out", help="Artifact root (default OUT_DIR)"),
):
    ctx.obj = CliState.create(seed, config, out)


# Include command groups
app.registered_commands += scene.router.registered_commands
app.registered_commands += events.router.registered_commands
app.registered_commands += models.router.registered_commands
app.add_typer(dataset.router, name="dataset")
app.command("report")(dataset.report)
