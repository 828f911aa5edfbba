import logging
import os
from concurrent.futures import ThreadPoolExecutor

import click

from src.commands import handle_errors
from src.commands.compare import write_comparison
from src.commands.data import resolve_doe
from src.commands.train import train_one
from src.config import OUTPUT_DIR_ENV, VARIANTS, RunConfigFile, load_run_config
from src.models.database import init_db
from src.models.dataset import save_dataset
from src.models.run import TrainRun
from src.utils.init_data import build_dataset, summarize

logger = logging.getLogger(__name__)

DATASET_FILE = 'dataset.sbd'


def reproduce(seed, out, runs=3, run_config=None, doe=None, iterations=None, workers=1,
              variants=VARIANTS, ledger=None):
    """gen-data -> train every (variant, seed) -> compare, all under ``out``"""
    run_config = run_config or RunConfigFile()
    dataset = build_dataset(seed, doe=doe or run_config.doe)
    save_dataset(dataset, os.path.join(out, DATASET_FILE))

    reports_dir = os.path.join(out, 'reports')
    configs = [run_config.train.replace(variant=variant, seed=seed + offset,
                                        total_iterations=iterations).validate()
               for variant in variants for offset in range(runs)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda c: train_one(dataset, c, reports_dir), configs))
    else:
        results = [train_one(dataset, c, reports_dir) for c in configs]

    reports = [report for _, report in results]
    if ledger:
        session_factory = init_db(ledger)
        for path, report in results:
            TrainRun.record(session_factory, report, label=os.path.basename(path))
    table = write_comparison(reports, out)
    return dataset, reports, table


@click.command('reproduce')
@click.option('--seed', required=True, type=int, help='Dataset seed; run r trains with seed + r.')
@click.option('--out', envvar=OUTPUT_DIR_ENV, required=True, type=click.Path(file_okay=False),
              help=f'Output directory (env {OUTPUT_DIR_ENV}).')
@click.option('--runs', default=3, show_default=True, type=click.IntRange(min=1),
              help='Seeds per variant.')
@click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False),
              help='Run configuration file ([train], [doe]).')
@click.option('--levels', type=click.Path(exists=True, dir_okay=False), help='Level overrides file.')
@click.option('--iterations', type=click.IntRange(min=0),
              help='Override total_iterations (default 5000).')
@click.option('--workers', default=1, show_default=True, type=click.IntRange(min=1),
              help='Concurrent trainings; results do not depend on it.')
@click.option('--ledger', type=click.Path(dir_okay=False), help='SQLite run ledger to record into.')
@handle_errors
def reproduce_cmd(seed, out, runs, config_path, levels, iterations, workers, ledger):
    """Generate data, train all four variants over several seeds and compare them."""
    run_config = load_run_config(config_path) if config_path else RunConfigFile()
    doe = resolve_doe(config_path, levels)
    dataset, reports, table = reproduce(seed, out, runs=runs, run_config=run_config, doe=doe,
                                        iterations=iterations, workers=workers,
                                        ledger=ledger or run_config.paths.get('ledger'))
    for line in summarize(dataset):
        click.echo(line)
    click.echo(table.to_csv().rstrip('\n'))
    click.echo(f'✓ {len(reports)} runs compared; outputs in {out}')
