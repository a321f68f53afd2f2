import click

from hire.commands import respond
from hire.services.experiment_service import ExperimentService


@click.command("gen")
@click.option("--config", "schema", required=True,
              help="Schema preset name (acm-like, imdb-like, dblp-like) or schema JSON path.")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--seed", type=int)
@click.option("--scale", type=float, default=1.0, show_default=True)
def gen(schema, out_path, seed, scale):
    """Generate a synthetic heterogeneous graph file."""
    respond(ExperimentService.gen(schema, out_path, seed=seed, scale=scale))
