import logging
import os
import sys
# DON'T CHANGE THIS !!!
sys.path.insert(0, os.path.dirname(os.path.dirname(__file__)))

import click

from src.config import LOG_LEVEL_ENV

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'


@click.group(context_settings={'help_option_names': ['-h', '--help']})
@click.option('--log-level', envvar=LOG_LEVEL_ENV, default='WARNING', show_default=True,
              type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR'], case_sensitive=False),
              help=f'Logging level (env {LOG_LEVEL_ENV}).')
def cli(log_level):
    """Boundary-decoder stress-image prediction for a two-die IC package."""
    logging.basicConfig(level=getattr(logging, log_level.upper()), format=LOG_FORMAT, force=True)


# Register command modules
from src.commands.data import gen_data_cmd
from src.commands.train import train_cmd
from src.commands.compare import compare_cmd
from src.commands.export import export_cmd
from src.commands.gradcheck import grad_check_cmd
from src.commands.reproduce import reproduce_cmd

cli.add_command(gen_data_cmd)
cli.add_command(train_cmd)
cli.add_command(compare_cmd)
cli.add_command(export_cmd)
cli.add_command(grad_check_cmd)
cli.add_command(reproduce_cmd)


if __name__ == '__main__':
    cli()
