import click

from hire.commands import distill_options, respond, run_options
from hire.services.experiment_service import ExperimentService


@click.command("train-teacher")
@run_options
def train_teacher(config_path, **flags):
    """Pretrain the teacher with cross-entropy."""
    respond(ExperimentService.train_teacher(config_path, **flags))


@click.command("distill")
@run_options
@click.option("--teacher", "teacher_checkpoint", required=True, type=click.Path(dir_okay=False))
@distill_options
def distill(config_path, teacher_checkpoint, **flags):
    """Train a student against a frozen teacher checkpoint."""
    respond(ExperimentService.distill(config_path, teacher_checkpoint, **flags))


@click.command("eval")
@click.option("--checkpoint", required=True, type=click.Path(dir_okay=False))
@click.option("--graph", "graph_path", required=True, type=click.Path(dir_okay=False))
@click.option("--split", type=click.Choice(["train", "val", "test"]), default="test", show_default=True)
@click.option("--cluster-nodes", type=click.Choice(["test", "all"]), default="test", show_default=True)
@click.option("--seed", type=int)
@click.option("--out", type=click.Path(file_okay=False))
def evaluate(checkpoint, graph_path, split, cluster_nodes, seed, out):
    """Score a checkpoint on one split of a graph file."""
    respond(ExperimentService.eval(checkpoint, graph_path, split, cluster_nodes, out=out, seed=seed))
