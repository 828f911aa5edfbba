import logging
import operator
import re

import click
import numpy as np

from src.commands import handle_errors
from src.config import OUTPUT_DIR_ENV
from src.errors import ConfigurationError, ValidationError
from src.models.dataset import PARAM_NAMES, Layer, load_dataset
from src.utils.checkpoints import load_checkpoint
from src.utils.evaluation import export_images
from src.utils.trainers import ae_knn_predict

logger = logging.getLogger(__name__)

# short filter names -> numeric column
FILTER_KEYS = {
    'modulus': 0, 'emc_modulus': 0,
    'cte': 1, 'emc_cte': 1,
    'die': 2, 'die_size': 2,
    'gap': 3, 'gap_size': 3,
}
COMPARATORS = {
    '>=': operator.ge, '<=': operator.le, '>': operator.gt, '<': operator.lt,
    '==': operator.eq, '=': operator.eq,
}
_CLAUSE = re.compile(r'^\s*([a-z_]+)\s*(>=|<=|==|=|>|<)\s*(.+?)\s*$')


def select_cases(dataset, expression):
    """
    Case ids matching ``expression``.

    The expression is a comma separated list. Bare integers select case ids;
    ``layer=<name>``, ``split=train|test`` and comparisons on
    die/gap/modulus/cte (``die>=1.5``) filter the whole dataset. Both kinds
    may be combined: ids are then filtered too.
    """
    ids = []
    mask = np.ones(len(dataset), dtype=bool)
    filtered = False
    for clause in (c for c in expression.split(',') if c.strip()):
        clause = clause.strip()
        if re.fullmatch(r'\d+', clause):
            case_id = int(clause)
            dataset.case(case_id)  # unknown ids raise
            ids.append(case_id)
            continue
        match = _CLAUSE.match(clause)
        if not match:
            raise ConfigurationError(f'cannot parse case filter {clause!r}')
        key, op, value = match.groups()
        filtered = True
        if key == 'layer':
            if op not in ('=', '=='):
                raise ConfigurationError(f'layer filter only supports "=", got {clause!r}')
            mask &= dataset.layers == Layer.parse(value)
        elif key == 'split':
            if op not in ('=', '==') or value not in ('train', 'test'):
                raise ConfigurationError(f'split filter must be split=train or split=test, got {clause!r}')
            members = np.zeros(len(dataset), dtype=bool)
            members[dataset.train_indices if value == 'train' else dataset.test_indices] = True
            mask &= members
        elif key in FILTER_KEYS:
            try:
                threshold = float(value)
            except ValueError:
                raise ConfigurationError(f'not a number in case filter {clause!r}') from None
            mask &= COMPARATORS[op](dataset.numeric[:, FILTER_KEYS[key]], threshold)
        else:
            raise ConfigurationError(
                f'unknown case filter key {key!r}; use layer, split or one of {sorted(FILTER_KEYS)}')

    if ids:
        selected = [i for i in dict.fromkeys(ids) if mask[i]]
    else:
        selected = [int(i) for i in np.flatnonzero(mask)] if filtered else []
    if not selected:
        raise ValidationError(f'case selection {expression!r} matched no cases')
    return selected


def checkpoint_predictor(checkpoint, dataset):
    """Callable case id -> predicted normalized image for a loaded checkpoint"""
    if checkpoint.nets.config.image_pixels != dataset.images.shape[1]:
        raise ConfigurationError(
            f'{checkpoint.path} predicts {checkpoint.nets.config.image_pixels} pixels, '
            f'dataset images have {dataset.images.shape[1]}')
    if checkpoint.variant == 'AE_KNN':
        if checkpoint.latent_store is None:
            raise ValidationError(f'{checkpoint.path} is an AE_KNN checkpoint without a latent store')

        def predict(case_id):
            return ae_knn_predict(dataset.normalized_params([case_id])[0], checkpoint.latent_store,
                                  checkpoint.nets)
    else:
        def predict(case_id):
            return checkpoint.nets.predict(dataset.normalized_params([case_id]))[0]
    return predict


@click.command('export')
@click.option('--data', required=True, type=click.Path(exists=True, dir_okay=False),
              help='Dataset file from gen-data.')
@click.option('--weights', required=True, multiple=True, type=click.Path(exists=True, dir_okay=False),
              help='Weight checkpoint (repeatable); one image per checkpoint and case.')
@click.option('--cases', required=True,
              help='Case ids and/or filters, e.g. "layer=overmold,die>=1.5,split=test".')
@click.option('--out', envvar=OUTPUT_DIR_ENV, required=True, type=click.Path(file_okay=False),
              help=f'Image output directory (env {OUTPUT_DIR_ENV}); created if absent.')
@click.option('--limit', type=click.IntRange(min=1), help='Export at most this many selected cases.')
@handle_errors
def export_cmd(data, weights, cases, out, limit):
    """Write ground-truth and predicted stress images as PGM panels."""
    dataset = load_dataset(data)
    selected = select_cases(dataset, cases)
    if limit:
        selected = selected[:limit]
    predictors = {}
    for path in weights:
        checkpoint = load_checkpoint(path)
        predictors[checkpoint.label] = checkpoint_predictor(checkpoint, dataset)
    truths = {case_id: dataset.images[case_id] for case_id in selected}

    index = export_images(selected, truths, predictors, out)
    logger.info('exported %d images for %d cases', len(index), len(selected))
    click.echo(f'✓ {len(selected)} cases, {len(index)} images written to {out}')
    for case_id in selected:
        p = dataset.case(case_id)
        values = ', '.join(f'{name}={getattr(p, name):g}' for name in PARAM_NAMES)
        click.echo(f'  case {case_id}: {p.layer.label}, {values}')
