"""
Tests for the SSD metrics, comparison tables, trend fits, report files and
image export.
"""

import json
import os

import numpy as np
import pytest

from src.config import TrainConfig
from src.errors import ConfigurationError, ValidationError
from src.models.report import CheckpointEntry, TrainReport, load_report, save_report, timing_path
from src.utils.evaluation import (build_comparison, build_scatter, export_images, fit_trend,
                                  layer_breakdown, mean_ssd, scatter_csv, ssd_error)
from src.utils.imaging import decode_pgm, encode_pgm, to_gray


def make_report(variant, seed, points, wall_time=1.0, kmeans_time=0.0):
    """Report with (iteration, train, test) checkpoints"""
    report = TrainReport(variant=variant, seed=seed, config=TrainConfig(variant=variant, seed=seed))
    for iteration, train, test in points:
        report.add(CheckpointEntry(iteration=iteration, train_ssd=train, test_ssd=test,
                                   wall_time=wall_time, kmeans_time=kmeans_time))
    return report


def test_ssd_examples():
    a = np.random.default_rng(0).uniform(size=676)
    assert ssd_error(a, a) == 0.0
    assert ssd_error(np.full(676, 0.5), np.zeros(676)) == 169.0
    b = np.random.default_rng(1).uniform(size=676)
    assert ssd_error(a, b) == ssd_error(b, a)
    with pytest.raises(ConfigurationError):
        ssd_error(np.zeros(3), np.zeros(4))


def test_mean_ssd_examples():
    cases = [(0, np.zeros(4))]
    predict = lambda _: np.full(4, 0.5)
    assert mean_ssd(predict, cases) == pytest.approx(0.25)
    assert mean_ssd(predict, cases * 2) == mean_ssd(predict, cases)

    truths = {0: np.zeros(1), 1: np.zeros(1)}
    preds = {0: np.sqrt([0.1]), 1: np.sqrt([0.3])}
    assert mean_ssd(lambda i: preds[i], truths.items()) == pytest.approx(0.2)
    with pytest.raises(ValidationError):
        mean_ssd(predict, [])


def test_layer_breakdown():
    preds = np.array([[1.0, 1.0], [0.0, 0.0], [0.5, 0.5]])
    truths = np.zeros((3, 2))
    assert layer_breakdown(preds, truths, [0, 1, 0]) == {'overmold': 0.625, 'uf': 0.0}


def test_fit_trend_examples():
    assert fit_trend([(0, 1), (1, 3)]) == pytest.approx((2.0, 1.0))
    assert fit_trend([(0, 0), (1, 1), (2, 2)]) == pytest.approx((1.0, 0.0))
    assert fit_trend([(0, 0), (0, 2), (2, 0), (2, 2)]) == pytest.approx((0.0, 1.0))
    with pytest.raises(ValidationError):
        fit_trend([(1, 0), (1, 2)])


def test_comparison_mean_and_std():
    table = build_comparison([make_report('BD', 0, [(0, 0.5, 0.5), (10, 0.2, 0.1)]),
                              make_report('BD', 1, [(0, 0.5, 0.5), (10, 0.2, 0.3)])])
    row = table.row('BD')
    assert row.runs == 2 and not row.single_run
    assert row.test_mean == pytest.approx(0.2)
    assert row.test_std == pytest.approx(0.1414, abs=1e-4)
    assert row.train_std == 0.0


def test_single_report_gives_single_row():
    table = build_comparison([make_report('DC_BD', 0, [(10, 0.2, 0.3)])])
    assert len(table.rows) == 1
    assert table.rows[0].single_run and table.rows[0].test_std == 0.0
    lines = table.to_csv().splitlines()
    assert lines[0].startswith('variant,runs,single_run')
    assert lines[1].startswith('DC_BD,1,1,')


def test_mixed_variants_grouped_in_order():
    reports = [make_report('AE_KNN', 0, [(10, None, 0.4)]),
               make_report('DC_BD', 0, [(10, 0.1, 0.2)]),
               make_report('BD', 0, [(10, 0.2, 0.3)]),
               make_report('DC_BD', 1, [(10, 0.1, 0.2)])]
    table = build_comparison(reports)
    assert [r.variant for r in table.rows] == ['BD', 'DC_BD', 'AE_KNN']
    assert table.row('DC_BD').runs == 2
    baseline = table.row('AE_KNN')
    assert baseline.train_mean is None and baseline.train_std is None
    assert table.row('DC_BD').vs_baseline_pct == pytest.approx(50.0)
    assert table.row('DC_BD').vs_bd_pct == pytest.approx(100.0 / 3.0)
    assert ',,' in table.to_csv().splitlines()[-1]


def test_empty_comparison_is_an_error():
    with pytest.raises(ConfigurationError):
        build_comparison([])


def test_timing_share():
    table = build_comparison([make_report('DC_BD', 0, [(10, 0.1, 0.2)], wall_time=10.0, kmeans_time=6.0)])
    assert table.row('DC_BD').kmeans_share == pytest.approx(0.6)
    assert 'kmeans_share' in table.timing_csv()
    assert 'time' not in table.to_csv()


def test_scatter_series_with_trend():
    reports = [make_report('BD', s, [(0, 0.5, 0.6), (10, 0.3, 0.4), (20, 0.1, 0.2)]) for s in (0, 1)]
    (series,) = build_scatter(reports, 'test')
    assert len(series.points) == 6
    assert series.slope == pytest.approx(-0.02)
    assert series.intercept == pytest.approx(0.6)
    assert scatter_csv([series]).splitlines()[1] == 'BD,test,0,0.600000'
    with pytest.raises(ConfigurationError):
        build_scatter(reports, 'validation')


def test_report_round_trip(tmp_path):
    report = make_report('AE_BD', 2, [(0, 0.5, 0.6), (10, 0.3, 0.4)], wall_time=3.5)
    path = str(tmp_path / 'ae_bd-seed2.jsonl')
    save_report(report, path)
    assert os.path.exists(timing_path(path))
    with open(path, encoding='utf-8') as handle:
        assert 'wall_time' not in handle.read()
    loaded = load_report(path)
    assert loaded.to_jsonl() == report.to_jsonl()
    assert loaded.wall_time == 3.5


def test_checkpoints_must_ascend():
    report = make_report('BD', 0, [(10, 0.1, 0.1)])
    with pytest.raises(ValidationError):
        report.add(CheckpointEntry(iteration=10, train_ssd=0.1, test_ssd=0.1))
    with pytest.raises(ValidationError):
        report.add(CheckpointEntry(iteration=20, train_ssd=0.1, test_ssd=float('nan')))


def test_grayscale_encoding():
    assert to_gray([0.0, 1.0, 0.5, -1.0, 2.0]).tolist() == [0, 255, 128, 0, 255]
    image = np.linspace(0.0, 1.0, 676)
    pixels = decode_pgm(encode_pgm(image))
    assert pixels.shape == (26, 26)
    assert pixels[0, 0] == 0 and pixels[25, 25] == 255


def test_export_images(tmp_path):
    out = tmp_path / 'nested' / 'images'
    truths = {3: np.full(676, 0.25), 8: np.full(676, 0.75)}
    predictors = {'self': lambda i: truths[i], 'flat': lambda i: np.full(676, 0.5)}
    index = export_images([3, 8], truths, predictors, str(out))
    files = sorted(p for p in os.listdir(out) if p.endswith('.pgm'))
    assert len(files) == 2 * (1 + len(predictors))
    assert 'case0003_truth_ssd0.0000.pgm' in files
    assert 'case0003_self_ssd0.0000.pgm' in files
    assert 'case0003_flat_ssd42.2500.pgm' in files
    with open(out / 'index.json', encoding='utf-8') as handle:
        assert len(json.load(handle)) == len(index) == 6
