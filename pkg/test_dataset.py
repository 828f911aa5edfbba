"""
Tests for the DOE enumeration, the surrogate stress field, normalization,
the train/test split and the dataset file.
"""

import dataclasses

import numpy as np
import pytest

from src.errors import ChecksumError, ConfigurationError, SchemaVersionError, ValidationError
from src.models.dataset import (PIXELS, DOEGrid, Layer, ParamVector, denormalize_images,
                                die_boundary_distance, enumerate_doe, load_dataset,
                                normalize_images, normalize_params, pixel_coordinates,
                                save_dataset, split_train_test, synthesize_dataset,
                                synthesize_stress_image)
from src.utils.container import read_container, write_container
from src.utils.init_data import default_train_size, summarize


def test_default_grid_enumeration():
    cases = enumerate_doe(DOEGrid())
    assert len(cases) == 1875
    assert DOEGrid().cases_per_layer == 625
    for layer in Layer:
        assert sum(1 for p in cases if p.layer == layer) == 625
    first = cases[0]
    assert first.numeric() == (5.0, 5.0, 0.5, 0.2)
    assert first.layer is Layer.OVERMOLD
    assert cases[1].numeric() == (5.0, 5.0, 0.5, 0.4)


def test_single_level_grid_gives_one_case_per_layer():
    levels = {'emc_modulus': (10.0,), 'emc_cte': (10.0,), 'die_size': (1.0,), 'gap_size': (0.5,)}
    cases = enumerate_doe(DOEGrid(levels=levels))
    assert [p.layer for p in cases] == [Layer.OVERMOLD, Layer.UF, Layer.RDL]


def test_empty_or_out_of_range_levels():
    levels = {'emc_modulus': (), 'emc_cte': (10.0,), 'die_size': (1.0,), 'gap_size': (0.5,)}
    with pytest.raises(ConfigurationError):
        DOEGrid(levels=levels)
    with pytest.raises(ConfigurationError):
        ParamVector(40.0, 10.0, 1.0, 0.5, Layer.UF)


def test_normalize_params_examples():
    np.testing.assert_array_equal(normalize_params(ParamVector(5, 5, 0.5, 0.2, Layer.OVERMOLD)),
                                  [0, 0, 0, 0, 0])
    np.testing.assert_allclose(normalize_params(ParamVector(30, 20, 1.8, 1.0, Layer.RDL)),
                               [1, 1, 1, 1, 1])
    np.testing.assert_allclose(normalize_params(ParamVector(17, 12, 1.2, 0.6, Layer.UF)),
                               [0.48, 0.4667, 0.5385, 0.5, 0.5], atol=0.03)


def test_far_field_pixel_is_only_the_far_field_term():
    p = ParamVector(5, 5, 0.5, 0.2, Layer.RDL)
    image = synthesize_stress_image(p)
    x, y = pixel_coordinates()
    far = int(np.argmax(die_boundary_distance(x, y, p.die_size, p.gap_size)))
    material = (5 / 30) * (5 / 20)
    assert image[far] == pytest.approx(25.0 * material, rel=1e-4)


def test_overmold_peak_exceeds_rdl():
    overmold = synthesize_stress_image(ParamVector(30, 20, 1.8, 1.0, Layer.OVERMOLD))
    rdl = synthesize_stress_image(ParamVector(30, 20, 1.8, 1.0, Layer.RDL))
    assert overmold.max() > rdl.max()


def test_surrogate_is_deterministic_and_finite():
    p = ParamVector(17, 12, 1.2, 0.6, Layer.UF)
    a, b = synthesize_stress_image(p), synthesize_stress_image(p)
    assert a.shape == (PIXELS,)
    np.testing.assert_array_equal(a, b)
    assert np.all(np.isfinite(a)) and np.all(a >= 0)


def test_pixel_variance_orders_layers_for_every_geometry():
    for p in enumerate_doe(DOEGrid(layers=(Layer.OVERMOLD,))):
        variances = [synthesize_stress_image(dataclasses.replace(p, layer=layer)).var()
                     for layer in Layer]
        assert variances[0] > variances[1] > variances[2], p


def test_monotone_in_modulus_and_cte():
    rng = np.random.default_rng(11)
    for _ in range(50):
        e, cte = rng.uniform(5, 25), rng.uniform(5, 15)
        die, gap = rng.uniform(0.5, 1.8), rng.uniform(0.2, 1.0)
        layer = Layer(int(rng.integers(3)))
        base = synthesize_stress_image(ParamVector(e, cte, die, gap, layer))
        stiffer = synthesize_stress_image(ParamVector(e + 5, cte, die, gap, layer))
        expands = synthesize_stress_image(ParamVector(e, cte + 5, die, gap, layer))
        assert np.all(stiffer > base) and np.all(expands > base)


def test_normalization_bounds_and_extrema(small_dataset):
    images = small_dataset.images
    assert images.min() == 0.0 and images.max() == 1.0
    manifest = small_dataset.manifest
    for low, high in manifest.layer_extrema.values():
        assert manifest.global_min <= low and manifest.global_max >= high
    assert manifest.layer_extrema['overmold'][1] >= manifest.layer_extrema['rdl'][1]


def test_global_normalization_round_trip(small_dataset):
    assert small_dataset.manifest.normalization == 'global'
    restored = denormalize_images(small_dataset.images, small_dataset.layers, small_dataset.manifest)
    np.testing.assert_allclose(restored, small_dataset.raw, rtol=0, atol=1e-12)


def test_per_layer_normalization(small_dataset):
    normalize_images(small_dataset, mode='per_layer')
    for layer in Layer:
        rows = small_dataset.images[small_dataset.layers == layer]
        assert rows.min() == 0.0 and rows.max() == 1.0
    restored = denormalize_images(small_dataset.images, small_dataset.layers, small_dataset.manifest)
    np.testing.assert_allclose(restored, small_dataset.raw, rtol=1e-12, atol=1e-9)


def test_constant_dataset_is_degenerate(small_doe):
    dataset = synthesize_dataset(DOEGrid(levels=small_doe.levels))
    dataset.raw = np.ones_like(dataset.raw)
    with pytest.raises(ValidationError, match='degenerate normalization'):
        normalize_images(dataset)


def test_default_split_sizes():
    layers = np.repeat(np.arange(3), 625)
    train, test = split_train_test(layers, 1500, seed=0)
    assert len(train) == 1500 and len(test) == 375
    assert not set(train) & set(test)
    assert sorted(train + test) == list(range(1875))
    assert all(np.sum(layers[train] == layer) == 500 for layer in range(3))
    assert split_train_test(layers, 1500, seed=0) == (train, test)
    assert split_train_test(layers, 1500, seed=1) != (train, test)


def test_split_size_errors():
    layers = np.repeat(np.arange(3), 625)
    with pytest.raises(ConfigurationError):
        split_train_test(layers, 1875, seed=0)
    with pytest.raises(ConfigurationError):
        split_train_test(layers, 1501, seed=0)
    train, test = split_train_test(layers, 1501, seed=0, stratify=False)
    assert len(train) == 1501 and len(test) == 374


def test_default_train_size():
    assert default_train_size(1875) == 1500
    assert default_train_size(48) == 36


def test_dataset_round_trip(small_dataset, tmp_path):
    path = str(tmp_path / 'data.sbd')
    save_dataset(small_dataset, path)
    loaded = load_dataset(path)
    assert loaded == small_dataset
    np.testing.assert_array_equal(loaded.train_indices, small_dataset.train_indices)


def test_same_seed_same_file(small_doe, tmp_path):
    from src.utils.init_data import build_dataset

    a, b = str(tmp_path / 'a.sbd'), str(tmp_path / 'b.sbd')
    save_dataset(build_dataset(3, doe=small_doe), a)
    save_dataset(build_dataset(3, doe=small_doe), b)
    with open(a, 'rb') as fa, open(b, 'rb') as fb:
        assert fa.read() == fb.read()


def test_corrupted_byte_fails_checksum(small_dataset_file):
    with open(small_dataset_file, 'r+b') as handle:
        handle.seek(100)
        value = handle.read(1)
        handle.seek(100)
        handle.write(bytes([value[0] ^ 0xFF]))
    with pytest.raises(ChecksumError):
        load_dataset(small_dataset_file)


def test_wrong_schema_version(small_dataset_file, tmp_path):
    header, blocks = read_container(small_dataset_file)
    header.pop('blocks')
    header['schema_version'] = 99
    path = str(tmp_path / 'future.sbd')
    write_container(path, header, blocks)
    with pytest.raises(SchemaVersionError, match='99'):
        load_dataset(path)


def test_summary_lines(small_dataset):
    lines = summarize(small_dataset)
    assert lines[0] == '48 cases (16/layer)'
    assert lines[1] == 'train 36 / test 12'
