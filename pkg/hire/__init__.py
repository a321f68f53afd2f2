import click
from dotenv import load_dotenv

# Load environment variables before Config is imported
load_dotenv()


def create_cli() -> click.Group:
    @click.group()
    def cli():
        """Heterogeneous graph teacher/student distillation."""

    from hire.commands.data import gen
    from hire.commands.experiments import ablate, sweep
    from hire.commands.training import distill, evaluate, train_teacher

    for command in (gen, train_teacher, distill, evaluate, sweep, ablate):
        cli.add_command(command)
    return cli
