import click

from hire.commands import distill_options, respond, run_options
from hire.services.experiment_service import ALL_GRIDS, ExperimentService


@click.command("sweep")
@run_options
@click.option("--teacher", "teacher_checkpoint", required=True, type=click.Path(dir_okay=False))
@click.option("--axis", "axes", multiple=True, type=click.Choice(sorted(ALL_GRIDS)),
              help="Sweep only these axes; others stay at the config's values. Repeatable.")
@distill_options
def sweep(config_path, teacher_checkpoint, axes, **flags):
    """Grid search over tau / alpha / beta (and optional training axes)."""
    respond(ExperimentService.sweep(config_path, teacher_checkpoint, list(axes) or None, **flags))


@click.command("ablate")
@run_options
@click.option("--teacher", "teacher_checkpoint", required=True, type=click.Path(dir_okay=False))
@distill_options
def ablate(config_path, teacher_checkpoint, **flags):
    """Compare CE / NKD / RKD / HIRE students over the configured seeds."""
    flags.pop("variant", None)
    respond(ExperimentService.ablate(config_path, teacher_checkpoint, **flags))
