import click

from hire.utils.helpers import dumps_json


def respond(result):
    """Print a service response and exit with its code (the CLI's jsonify)."""
    if isinstance(result, tuple):
        doc, code = result
        click.echo(dumps_json(doc), err=True)
        raise SystemExit(code)
    click.echo(dumps_json(result))
    return result


def distill_options(f):
    """Flags shared by every command that trains a student."""
    options = [
        click.option("--variant", type=click.Choice(["ce", "nkd", "rkd", "hire"], case_sensitive=False)),
        click.option("--alpha", type=float),
        click.option("--beta", type=float),
        click.option("--tau", type=float),
        click.option("--sigma", type=float),
        click.option("--kernel", type=click.Choice(["exact", "taylor2"])),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def run_options(f):
    options = [
        click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False)),
        click.option("--seed", type=int),
        click.option("--train-fraction", type=float),
        click.option("--scale", type=float),
        click.option("--out", type=click.Path(file_okay=False)),
        click.option("--cluster-nodes", type=click.Choice(["test", "all"])),
    ]
    for option in reversed(options):
        f = option(f)
    return f
