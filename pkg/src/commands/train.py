import logging
import os

import click

from src.commands import handle_errors
from src.config import OUTPUT_DIR_ENV, VARIANTS, RunConfigFile, load_run_config
from src.errors import ConfigurationError
from src.models.database import init_db
from src.models.dataset import load_dataset
from src.models.report import save_report
from src.models.run import TrainRun
from src.utils.trainers import run_training

logger = logging.getLogger(__name__)


def report_name(variant, seed):
    return f'{variant.lower()}-seed{seed}.jsonl'


def pick_path(option, run_config, key, flag):
    value = option or run_config.paths.get(key)
    if not value:
        raise ConfigurationError(f'no {flag} given and no {key!r} entry in the config [paths]')
    return value


def train_one(dataset, config, out, ledger=None):
    """Train one (variant, seed), write its report and checkpoints and return the report path"""
    checkpoint_dir = os.path.join(out, 'checkpoints')
    report = run_training(dataset, config, checkpoint_dir=checkpoint_dir)
    path = save_report(report, os.path.join(out, report_name(config.variant, config.seed)))
    if ledger:
        TrainRun.record(init_db(ledger), report, label=os.path.basename(path))
    return path, report


@click.command('train')
@click.option('--data', type=click.Path(dir_okay=False), help='Dataset file from gen-data.')
@click.option('--variant', help=f'One of {", ".join(VARIANTS)} (default from config: DC_BD).')
@click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False),
              help='Run configuration file ([train], [doe], [paths]).')
@click.option('--seed', required=True, type=int, help='Seed for initialization, batching and k-means.')
@click.option('--out', envvar=OUTPUT_DIR_ENV, type=click.Path(file_okay=False),
              help=f'Output directory (env {OUTPUT_DIR_ENV}).')
@click.option('--iterations', type=click.IntRange(min=0),
              help='Override total_iterations (default 5000); checkpoints are clipped to it.')
@click.option('--ledger', type=click.Path(dir_okay=False), help='SQLite run ledger to record into.')
@handle_errors
def train_cmd(data, variant, config_path, seed, out, iterations, ledger):
    """Train one variant and write its report and weight checkpoints."""
    run_config = load_run_config(config_path) if config_path else RunConfigFile()
    config = run_config.train.replace(variant=variant, seed=seed, total_iterations=iterations).validate()
    data = pick_path(data, run_config, 'data', '--data')
    out = pick_path(out, run_config, 'out', '--out')
    ledger = ledger or run_config.paths.get('ledger')

    dataset = load_dataset(data)
    path, report = train_one(dataset, config, out, ledger=ledger)
    final = report.final
    train_text = 'n/a' if final.train_ssd is None else f'{final.train_ssd:.6f}'
    click.echo(f'✓ {config.variant} seed={seed}: it={final.iteration} '
               f'train={train_text} test={final.test_ssd:.6f}')
    click.echo(f'  report: {path}')
