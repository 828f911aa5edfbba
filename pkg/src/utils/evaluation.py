"""
Error metrics, multi-run comparison tables, trend lines and image export.

Errors are reported as per-pixel mean SSD: the raw sum of squared differences
of an image pair divided by its pixel count, averaged over cases.
"""

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from src.config import VARIANTS
from src.errors import ConfigurationError, DatasetIOError, ValidationError
from src.models.dataset import Layer
from src.utils.imaging import write_pgm


def ssd_error(pred, truth):
    """Raw sum of squared differences (no 1/2 factor)."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ConfigurationError(f'ssd shape mismatch: {pred.shape} vs {truth.shape}')
    diff = pred - truth
    return float(np.sum(diff * diff))


def per_pixel_ssd(preds, truths):
    """Row-wise per-pixel SSD of two (n, pixels) arrays."""
    preds = np.atleast_2d(np.asarray(preds, dtype=np.float64))
    truths = np.atleast_2d(np.asarray(truths, dtype=np.float64))
    if preds.shape != truths.shape:
        raise ConfigurationError(f'ssd shape mismatch: {preds.shape} vs {truths.shape}')
    diff = preds - truths
    return np.sum(diff * diff, axis=1) / preds.shape[1]


def mean_ssd(predict, cases):
    """Mean per-pixel SSD of ``predict(x)`` against ``truth`` over ``(x, truth)`` cases."""
    errors = []
    for inputs, truth in cases:
        truth = np.asarray(truth, dtype=np.float64).reshape(-1)
        errors.append(ssd_error(np.asarray(predict(inputs)).reshape(-1), truth) / truth.size)
    if not errors:
        raise ValidationError('mean_ssd needs at least one case')
    return math.fsum(errors) / len(errors)


def mean_ssd_arrays(preds, truths):
    errors = per_pixel_ssd(preds, truths)
    if errors.size == 0:
        raise ValidationError('mean_ssd needs at least one case')
    return math.fsum(errors.tolist()) / errors.size


def layer_breakdown(preds, truths, layers):
    """Mean per-pixel SSD per layer label."""
    errors = per_pixel_ssd(preds, truths)
    layers = np.asarray(layers)
    out = {}
    for layer in Layer:
        rows = errors[layers == layer]
        if rows.size:
            out[layer.label] = math.fsum(rows.tolist()) / rows.size
    return out


@dataclass
class ScatterSeries:
    variant: str
    split: str
    points: list = field(default_factory=list)
    slope: float = None
    intercept: float = None

    def fit(self):
        self.slope, self.intercept = fit_trend(self.points)
        return self


def fit_trend(points):
    """Ordinary least squares line through ``(x, y)`` points -> (slope, intercept)."""
    if isinstance(points, ScatterSeries):
        points = points.points
    data = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    x, y = data[:, 0], data[:, 1]
    if data.shape[0] < 2 or np.all(x == x[0]):
        raise ValidationError('trend fit needs at least two distinct x values')
    x_mean, y_mean = x.mean(), y.mean()
    dx = x - x_mean
    slope = float(np.sum(dx * (y - y_mean)) / np.sum(dx * dx))
    return slope, float(y_mean - slope * x_mean)


@dataclass
class ComparisonRow:
    variant: str
    runs: int
    train_mean: float = None
    train_std: float = None
    test_mean: float = None
    test_std: float = None
    time_min: float = 0.0
    time_max: float = 0.0
    kmeans_share: float = 0.0
    vs_baseline_pct: float = None
    vs_bd_pct: float = None

    @property
    def single_run(self):
        return self.runs < 2


@dataclass
class ComparisonTable:
    rows: list = field(default_factory=list)

    def row(self, variant):
        for row in self.rows:
            if row.variant == variant:
                return row
        return None

    def to_csv(self):
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(['variant', 'runs', 'single_run', 'train_error_mean', 'train_error_std',
                         'test_error_mean', 'test_error_std', 'test_vs_baseline_pct',
                         'test_vs_bd_pct'])
        for r in self.rows:
            writer.writerow([r.variant, r.runs, int(r.single_run), _fmt(r.train_mean),
                             _fmt(r.train_std), _fmt(r.test_mean), _fmt(r.test_std),
                             _fmt(r.vs_baseline_pct, 2), _fmt(r.vs_bd_pct, 2)])
        return buffer.getvalue()

    def timing_csv(self):
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(['variant', 'runs', 'time_min_s', 'time_max_s', 'kmeans_share'])
        for r in self.rows:
            writer.writerow([r.variant, r.runs, _fmt(r.time_min, 3), _fmt(r.time_max, 3),
                             _fmt(r.kmeans_share, 3)])
        return buffer.getvalue()


def _fmt(value, digits=6):
    return '' if value is None else f'{value:.{digits}f}'


def _mean_std(values):
    values = sorted(values)
    n = len(values)
    mean = math.fsum(values) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var)


def _variant_order(variant):
    return (VARIANTS.index(variant) if variant in VARIANTS else len(VARIANTS), variant)


def build_comparison(reports):
    """Aggregate final-checkpoint errors per variant (std uses n - 1)."""
    reports = list(reports)
    if not reports:
        raise ConfigurationError('no reports to compare')
    grouped = {}
    for report in reports:
        if report.final is None:
            raise ValidationError(f'report {report!r} has no checkpoints')
        grouped.setdefault(report.variant, []).append(report)

    table = ComparisonTable()
    for variant in sorted(grouped, key=_variant_order):
        runs = grouped[variant]
        row = ComparisonRow(variant=variant, runs=len(runs))
        trains = [r.final.train_ssd for r in runs if r.final.train_ssd is not None]
        tests = [r.final.test_ssd for r in runs if r.final.test_ssd is not None]
        if trains and variant != 'AE_KNN':
            row.train_mean, row.train_std = _mean_std(trains)
        if tests:
            row.test_mean, row.test_std = _mean_std(tests)
        times = [r.wall_time for r in runs]
        row.time_min, row.time_max = min(times), max(times)
        total = math.fsum(times)
        row.kmeans_share = math.fsum(r.kmeans_time for r in runs) / total if total > 0 else 0.0
        table.rows.append(row)

    baseline, bd = table.row('AE_KNN'), table.row('BD')
    for row in table.rows:
        if row.test_mean is None:
            continue
        if baseline is not None and baseline.test_mean:
            row.vs_baseline_pct = 100.0 * (baseline.test_mean - row.test_mean) / baseline.test_mean
        if bd is not None and bd.test_mean:
            row.vs_bd_pct = 100.0 * (bd.test_mean - row.test_mean) / bd.test_mean
    return table


def build_scatter(reports, split):
    """(iteration, error) points per variant over every run, with OLS trend."""
    if split not in ('train', 'test'):
        raise ConfigurationError(f'split must be "train" or "test", got {split!r}')
    series = {}
    for report in sorted(reports, key=lambda r: (_variant_order(r.variant), r.seed)):
        for entry in report.checkpoints:
            value = entry.train_ssd if split == 'train' else entry.test_ssd
            if value is None:
                continue
            series.setdefault(report.variant, ScatterSeries(report.variant, split))
            series[report.variant].points.append((entry.iteration, value))
    for s in series.values():
        xs = {x for x, _ in s.points}
        if len(xs) >= 2:
            s.fit()
    return [series[v] for v in sorted(series, key=_variant_order)]


def scatter_csv(series):
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(['variant', 'split', 'iteration', 'error'])
    for s in series:
        for x, y in s.points:
            writer.writerow([s.variant, s.split, int(x), _fmt(y)])
    return buffer.getvalue()


def trend_csv(series):
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(['variant', 'split', 'points', 'slope', 'intercept'])
    for s in series:
        writer.writerow([s.variant, s.split, len(s.points), _fmt(s.slope, 12), _fmt(s.intercept)])
    return buffer.getvalue()


def export_images(cases, truths, predictors, path):
    """
    Write the ground truth and every predictor's output for each case as PGM.

    ``cases`` are case ids, ``truths`` maps id -> normalized image and
    ``predictors`` maps a label to a callable id -> image. Filenames carry the
    SSD against the truth; ``index.json`` holds the raw values and labels.
    """
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise DatasetIOError(f'cannot create {path}: {exc}') from exc

    index = []
    for case_id in cases:
        truth = np.asarray(truths[case_id], dtype=np.float64).reshape(-1)
        outputs = [('truth', truth)] + [(label, np.asarray(fn(case_id), dtype=np.float64).reshape(-1))
                                        for label, fn in predictors.items()]
        for label, image in outputs:
            ssd = ssd_error(image, truth)
            name = f'case{case_id:04d}_{label}_ssd{ssd:.4f}.pgm'
            write_pgm(os.path.join(path, name), image)
            index.append({'case': int(case_id), 'label': label, 'file': name, 'ssd': ssd,
                          'values': image.tolist()})

    try:
        with open(os.path.join(path, 'index.json'), 'w', encoding='utf-8') as handle:
            json.dump(index, handle, indent=1)
    except OSError as exc:
        raise DatasetIOError(f'cannot write export index: {exc}') from exc
    return index
