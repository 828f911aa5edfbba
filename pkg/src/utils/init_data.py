"""
Builds the default DOE dataset: enumerate, synthesize, normalize, split.
"""

import logging

from src.config import DOEConfig
from src.models.dataset import (DOEGrid, Layer, SurrogateConstants, normalize_images,
                                split_train_test, synthesize_dataset)

logger = logging.getLogger(__name__)


def build_dataset(seed, doe=None, workers=1):
    """Full-factorial surrogate dataset with normalized images and a seeded split"""
    doe = (doe or DOEConfig()).validate()
    grid = DOEGrid(levels=doe.levels)
    constants = SurrogateConstants(table=doe.surrogate)

    dataset = synthesize_dataset(grid, constants, seed=seed, workers=workers)
    normalize_images(dataset, mode=doe.normalization)
    n_train = doe.n_train
    # only the default size adapts to smaller level tables; explicit sizes are validated
    if n_train >= len(dataset) and n_train == DOEConfig.n_train:
        n_train = default_train_size(len(dataset))
        logger.warning('default n_train does not fit %d cases; using %d', len(dataset), n_train)
    train, test = split_train_test(dataset.layers, n_train, seed, stratify=doe.stratify)
    dataset.manifest.train_indices = train
    dataset.manifest.test_indices = test

    logger.info('generated %d cases (%d/layer), %d train / %d test',
                len(dataset), grid.cases_per_layer, len(train), len(test))
    return dataset


def default_train_size(total, layers=len(Layer)):
    """About 80% of the cases, rounded down to a multiple of the layer count."""
    n = int(total * 0.8) // layers * layers
    return max(layers, n)


def summarize(dataset):
    """Case counts and per-layer extrema lines for the command output"""
    counts = dataset.layer_counts()
    per_layer = sorted(set(counts.values()))
    per_layer_text = str(per_layer[0]) if len(per_layer) == 1 else '/'.join(str(c) for c in counts.values())
    lines = [f'{len(dataset)} cases ({per_layer_text}/layer)',
             f'train {len(dataset.manifest.train_indices)} / test {len(dataset.manifest.test_indices)}',
             f'global stress range: {dataset.manifest.global_min:.3f} .. {dataset.manifest.global_max:.3f} MPa']
    for layer in Layer:
        if layer.label in dataset.manifest.layer_extrema:
            low, high = dataset.manifest.layer_extrema[layer.label]
            lines.append(f'  {layer.label:<9} min {low:9.3f}  max {high:9.3f} MPa')
    return lines
