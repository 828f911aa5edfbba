import glob
import logging
import os

import click

from src.commands import handle_errors
from src.config import OUTPUT_DIR_ENV
from src.errors import ConfigurationError, DatasetIOError
from src.models.database import init_db
from src.models.report import load_report
from src.models.run import TrainRun
from src.utils.evaluation import build_comparison, build_scatter, scatter_csv, trend_csv

logger = logging.getLogger(__name__)

OUTPUT_FILES = ('comparison.csv', 'timings.csv', 'scatter_train.csv', 'scatter_test.csv', 'trends.csv')


def expand_report_paths(paths):
    """Report files as given; a directory stands for the reports directly inside it."""
    out = []
    for path in paths:
        if os.path.isdir(path):
            found = sorted(p for p in glob.glob(os.path.join(path, '*.jsonl'))
                           if not p.endswith('.timing.jsonl'))
            out.extend(found)
        else:
            out.append(path)
    return out


def write_comparison(reports, out):
    """Write the comparison, timing, scatter and trend CSVs; returns the table"""
    table = build_comparison(reports)
    series = {split: build_scatter(reports, split) for split in ('train', 'test')}
    contents = {
        'comparison.csv': table.to_csv(),
        'timings.csv': table.timing_csv(),
        'scatter_train.csv': scatter_csv(series['train']),
        'scatter_test.csv': scatter_csv(series['test']),
        'trends.csv': trend_csv(series['train'] + series['test']),
    }
    try:
        os.makedirs(out, exist_ok=True)
        for name, text in contents.items():
            with open(os.path.join(out, name), 'w', encoding='utf-8', newline='\n') as handle:
                handle.write(text)
    except OSError as exc:
        raise DatasetIOError(f'cannot write comparison to {out}: {exc}') from exc
    return table


@click.command('compare')
@click.option('--reports', multiple=True, type=click.Path(exists=True),
              help='Report file or directory of reports (repeatable).')
@click.option('--out', envvar=OUTPUT_DIR_ENV, required=True, type=click.Path(file_okay=False),
              help=f'Output directory (env {OUTPUT_DIR_ENV}).')
@click.option('--ledger', type=click.Path(exists=True, dir_okay=False),
              help='Also compare every run stored in this SQLite ledger.')
@handle_errors
def compare_cmd(reports, out, ledger):
    """Aggregate reports into comparison, timing and scatter CSVs."""
    loaded = [load_report(path) for path in expand_report_paths(reports)]
    if ledger:
        loaded.extend(TrainRun.load_reports(init_db(ledger)))
    if not loaded:
        raise ConfigurationError('no reports to compare; pass --reports or --ledger')

    table = write_comparison(loaded, out)
    for row in table.rows:
        test = 'n/a' if row.test_mean is None else f'{row.test_mean:.6f} ± {row.test_std:.6f}'
        note = ' (single run)' if row.single_run else ''
        click.echo(f'  {row.variant:<7} runs={row.runs} test={test}{note}')
    click.echo(f'✓ {len(loaded)} reports compared; tables written to {out}')
