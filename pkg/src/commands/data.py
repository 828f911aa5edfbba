import dataclasses
import logging

import click

from src.commands import handle_errors
from src.config import DOEConfig, load_levels_file, load_run_config
from src.models.dataset import save_dataset
from src.utils.init_data import build_dataset, summarize

logger = logging.getLogger(__name__)


def resolve_doe(config_path=None, levels_path=None):
    """DOE settings from an optional run config file, with a levels file on top"""
    doe = load_run_config(config_path).doe if config_path else DOEConfig()
    if levels_path:
        doe = dataclasses.replace(doe, levels=load_levels_file(levels_path))
    return doe.validate()


@click.command('gen-data')
@click.option('--out', required=True, type=click.Path(dir_okay=False), help='Dataset file to write.')
@click.option('--seed', required=True, type=int, help='Seed for the train/test split.')
@click.option('--levels', type=click.Path(exists=True, dir_okay=False),
              help='Level overrides (key = v1, v2, ...); default is the 5-level table.')
@click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False),
              help='Run configuration file; its [doe] section applies.')
@click.option('--workers', default=1, show_default=True, type=click.IntRange(min=1),
              help='Threads used to synthesize images.')
@handle_errors
def gen_data_cmd(out, seed, levels, config_path, workers):
    """Generate the full-factorial surrogate dataset and its split."""
    doe = resolve_doe(config_path, levels)
    dataset = build_dataset(seed, doe=doe, workers=workers)
    save_dataset(dataset, out)
    for line in summarize(dataset):
        click.echo(line)
    click.echo(f'✓ dataset written to {out}')
