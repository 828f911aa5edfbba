"""
Tests for the composite loss, the per-variant training steps, the trainer
and the AE+KNN baseline.
"""

import os

import numpy as np
import pytest

from src.errors import ClusteringError, ConfigurationError, StaleClusterError, ValidationError
from src.models.cluster import kmeans_fit
from src.models.networks import BOUNDARY, DECODER, ENCODER, BoundaryDecoderNets, NetworkConfig
from src.models.report import LatentStore
from src.models.tensor import scale
from src.utils.checkpoints import checkpoint_name, load_checkpoint
from src.utils.evaluation import mean_ssd_arrays
from src.utils.trainers import (Batch, BatchSampler, Trainer, ae_knn_fit, ae_knn_predict,
                                composite_loss, make_optimizer, run_training, train_step_ae_bd,
                                train_step_bd, train_step_dc_bd)


def make_nets(config, seed=0):
    return BoundaryDecoderNets.create(NetworkConfig.from_train_config(config), seed)


def snapshot(nets, prefix):
    return {name: nets.store[name].data.copy() for name in nets.store.names(prefix)}


def fitted_cluster(nets, batch, k=2, iteration=0):
    cluster = kmeans_fit(nets.encode_array(batch.images), k, seed=0)
    cluster.fitted_at = iteration
    return cluster


def test_bd_loss_is_l3(small_dataset, tiny_config):
    nets = make_nets(tiny_config)
    batch = Batch.from_dataset(small_dataset, range(8))
    terms = composite_loss(batch, nets, tiny_config, variant='BD')
    assert terms.total is terms.l3
    assert terms.l1 is None and terms.l2 is None


def test_zero_lambdas_reduce_dc_bd_to_l3(small_dataset, tiny_config):
    nets = make_nets(tiny_config)
    batch = Batch.from_dataset(small_dataset, range(8))
    config = tiny_config.replace(lambda1=0.0, lambda2=0.0)
    dc = composite_loss(batch, nets, config, cluster=fitted_cluster(nets, batch), variant='DC_BD')
    bd = composite_loss(batch, nets, config, variant='BD')
    assert dc.total.item() == bd.total.item()


def test_cluster_presence_is_checked(small_dataset, tiny_config):
    nets = make_nets(tiny_config)
    batch = Batch.from_dataset(small_dataset, range(4))
    with pytest.raises(ClusteringError):
        composite_loss(batch, nets, tiny_config, variant='DC_BD')
    with pytest.raises(ConfigurationError):
        composite_loss(batch, nets, tiny_config, cluster=fitted_cluster(nets, batch), variant='BD')


def test_bd_step_never_touches_encoder(small_dataset, tiny_config):
    nets = make_nets(tiny_config)
    optimizer = make_optimizer(tiny_config)
    before = snapshot(nets, ENCODER)
    for start in (0, 8, 16):
        train_step_bd(Batch.from_dataset(small_dataset, range(start, start + 8)), nets, optimizer, tiny_config)
    after = snapshot(nets, ENCODER)
    assert all(np.array_equal(before[n], after[n]) for n in before)
    assert not np.array_equal(nets.store[f'{BOUNDARY}0.weight'].data,
                              make_nets(tiny_config).store[f'{BOUNDARY}0.weight'].data)


def test_bd_step_decreases_single_sample_loss(small_dataset, tiny_config):
    config = tiny_config.replace(learning_rate=1e-4)
    nets = make_nets(config)
    batch = Batch.from_dataset(small_dataset, [5])
    before = composite_loss(batch, nets, config, variant='BD').total.item()
    train_step_bd(batch, nets, make_optimizer(config), config)
    after = composite_loss(batch, nets, config, variant='BD').total.item()
    assert after < before


def test_bd_step_on_exact_targets_changes_nothing(small_dataset, tiny_config):
    nets = make_nets(tiny_config)
    params = small_dataset.normalized_params(np.arange(8))
    batch = Batch(params=params, images=nets.predict(params))
    before = nets.store.state()
    terms = train_step_bd(batch, nets, make_optimizer(tiny_config), tiny_config)
    assert terms.total.item() == 0.0
    for name, values in before.items():
        np.testing.assert_array_equal(nets.store[name].data, values)


def test_ae_bd_without_lambda1_keeps_encoder(small_dataset, tiny_config):
    config = tiny_config.replace(lambda1=0.0)
    nets = make_nets(config)
    before = snapshot(nets, ENCODER)
    train_step_ae_bd(Batch.from_dataset(small_dataset, range(8)), nets, make_optimizer(config), config)
    after = snapshot(nets, ENCODER)
    assert all(np.array_equal(before[n], after[n]) for n in before)


def test_ae_bd_without_lambda1_moves_like_bd(small_dataset, tiny_config):
    config = tiny_config.replace(lambda1=0.0)
    bd, ae = make_nets(config), make_nets(config)
    bd_optimizer, ae_optimizer = make_optimizer(config), make_optimizer(config)
    for start in (0, 8, 16, 24):
        batch = Batch.from_dataset(small_dataset, range(start, start + 8))
        train_step_bd(batch, bd, bd_optimizer, config)
        train_step_ae_bd(batch, ae, ae_optimizer, config)
    for prefix in (BOUNDARY, DECODER):
        for name, values in snapshot(bd, prefix).items():
            np.testing.assert_array_equal(ae.store[name].data, values)


def test_ae_bd_decoder_gradient_is_sum_of_paths(small_dataset, tiny_config):
    config = tiny_config.replace(lambda1=0.7)
    nets = make_nets(config)
    batch = Batch.from_dataset(small_dataset, range(8))
    terms = composite_loss(batch, nets, config, variant='AE_BD')

    nets.store.zero_grad()
    terms.total.backward()
    combined = nets.store.grads(DECODER)
    nets.store.zero_grad()
    scale(terms.l1, config.lambda1).backward()
    from_l1 = nets.store.grads(DECODER)
    nets.store.zero_grad()
    terms.l3.backward()
    from_l3 = nets.store.grads(DECODER)
    for name in combined:
        np.testing.assert_allclose(combined[name], from_l1[name] + from_l3[name], rtol=0, atol=1e-10)


def test_ae_bd_step_decreases_batch_loss(small_dataset, tiny_config):
    config = tiny_config.replace(learning_rate=1e-4)
    nets = make_nets(config)
    batch = Batch.from_dataset(small_dataset, range(8))
    before = composite_loss(batch, nets, config, variant='AE_BD').total.item()
    train_step_ae_bd(batch, nets, make_optimizer(config), config)
    assert composite_loss(batch, nets, config, variant='AE_BD').total.item() < before


def test_dc_bd_without_lambda2_matches_ae_bd(small_dataset, tiny_config):
    ae = Trainer(small_dataset, tiny_config.replace(variant='AE_BD', seed=3))
    dc = Trainer(small_dataset, tiny_config.replace(variant='DC_BD', lambda2=0.0, seed=3))
    for _ in range(100):
        ae.step()
        dc.step()
    for name in ae.nets.store:
        np.testing.assert_allclose(dc.nets.store[name].data, ae.nets.store[name].data, rtol=0, atol=1e-12)
    assert dc.kmeans_calls == 100


def test_stale_cluster_is_rejected(small_dataset, tiny_config):
    nets = make_nets(tiny_config)
    batch = Batch.from_dataset(small_dataset, range(8))
    cluster = fitted_cluster(nets, batch, iteration=3)
    with pytest.raises(StaleClusterError):
        train_step_dc_bd(batch, nets, cluster, make_optimizer(tiny_config), tiny_config, iteration=4)
    train_step_dc_bd(batch, nets, cluster, make_optimizer(tiny_config), tiny_config, iteration=3)


def test_zero_iterations_gives_initial_evaluation(small_dataset, tiny_config):
    report = run_training(small_dataset, tiny_config.replace(total_iterations=0))
    assert [c.iteration for c in report.checkpoints] == [0]


def test_reports_are_deterministic(small_dataset, tiny_config):
    a = run_training(small_dataset, tiny_config)
    b = run_training(small_dataset, tiny_config)
    assert a.to_jsonl() == b.to_jsonl()
    assert [c.iteration for c in a.checkpoints] == [0, 10, 20]
    assert set(a.final.layer_test_ssd) == {'overmold', 'uf', 'rdl'}


@pytest.mark.parametrize('variant', ['BD', 'AE_BD', 'DC_BD'])
def test_training_reduces_loss(small_dataset, tiny_config, variant):
    config = tiny_config.replace(variant=variant, learning_rate=1e-2, total_iterations=60,
                                 checkpoint_iterations=(60,))
    report = run_training(small_dataset, config)
    assert report.final.loss < 0.5 * report.checkpoints[0].loss


def test_checkpoint_files_for_every_checkpoint(small_dataset, tiny_config, tmp_path):
    config = tiny_config.replace(variant='BD')
    trainer = Trainer(small_dataset, config, checkpoint_dir=str(tmp_path))
    report = trainer.run()
    for iteration in config.checkpoints:
        assert os.path.exists(tmp_path / checkpoint_name('BD', config.seed, iteration))
    loaded = load_checkpoint(str(tmp_path / checkpoint_name('BD', config.seed, 20)))
    params = small_dataset.normalized_params(small_dataset.test_indices)
    np.testing.assert_array_equal(loaded.nets.predict(params), trainer.nets.predict(params))
    np.testing.assert_array_equal(loaded.nets.input_shift, trainer.train_set.images.mean(axis=0))
    assert loaded.iteration == report.final.iteration


def test_batch_sampler_covers_each_epoch():
    sampler = BatchSampler(range(10), 5, np.random.default_rng(0))
    first_epoch = np.concatenate([sampler.next(), sampler.next()])
    assert sorted(first_epoch.tolist()) == list(range(10))
    with pytest.raises(ConfigurationError):
        BatchSampler([], 4, np.random.default_rng(0))


def test_latent_store_matches_encoder(small_dataset, tiny_config):
    nets, store = ae_knn_fit(small_dataset, tiny_config)
    assert len(store) == len(small_dataset.train_indices)
    images = small_dataset.targets(store.case_indices)
    np.testing.assert_array_equal(store.latent_train, nets.encode_array(images))


def test_ae_knn_on_training_vector_is_exact(small_dataset, tiny_config):
    nets, store = ae_knn_fit(small_dataset, tiny_config)
    for row in (0, 7, len(store) - 1):
        out = ae_knn_predict(store.vec_train[row], store, nets)
        np.testing.assert_array_equal(out, nets.decode_array(store.latent_train[row:row + 1])[0])


def test_ae_knn_hand_built_store(tiny_config):
    nets = make_nets(tiny_config)
    rng = np.random.default_rng(0)
    store = LatentStore(vec_train=np.array([[0.0] * 5, [0.5] * 5, [1.0] * 5]),
                        latent_train=rng.normal(size=(3, tiny_config.latent_dim)),
                        case_indices=np.array([10, 11, 12]))
    expected = nets.decode_array(store.latent_train[1:2])[0]
    np.testing.assert_array_equal(ae_knn_predict(np.full(5, 0.45), store, nets), expected)
    both = ae_knn_predict(np.array([np.full(5, 0.4), np.full(5, 0.6)]), store, nets)
    np.testing.assert_array_equal(both[0], both[1])


def test_ae_knn_ties_go_to_lowest_case_id(tiny_config):
    nets = make_nets(tiny_config)
    latents = np.random.default_rng(1).normal(size=(2, tiny_config.latent_dim))
    store = LatentStore(vec_train=np.zeros((2, 5)), latent_train=latents, case_indices=np.array([5, 2]))
    np.testing.assert_array_equal(ae_knn_predict(np.zeros(5), store, nets),
                                  nets.decode_array(latents[1:2])[0])


def test_ae_knn_empty_store(tiny_config):
    empty = LatentStore(vec_train=np.zeros((0, 5)), latent_train=np.zeros((0, 4)),
                        case_indices=np.zeros(0, dtype=np.int64))
    with pytest.raises(ValidationError):
        ae_knn_predict(np.zeros(5), empty, make_nets(tiny_config))


def test_ae_knn_reconstruction_improves(small_dataset, tiny_config):
    config = tiny_config.replace(variant='AE_KNN', learning_rate=1e-2, total_iterations=40,
                                 checkpoint_iterations=(40,))
    report = run_training(small_dataset, config)
    assert report.final.l1 < report.checkpoints[0].l1
    assert report.final.train_ssd is None


def test_unnormalized_dataset_is_rejected(small_doe, tiny_config):
    from src.models.dataset import DOEGrid, synthesize_dataset

    raw = synthesize_dataset(DOEGrid(levels=small_doe.levels))
    with pytest.raises(ValidationError):
        Trainer(raw, tiny_config)


def test_autoencoder_beats_mean_image(small_dataset, tiny_config):
    config = tiny_config.replace(variant='AE_KNN', learning_rate=5e-3, total_iterations=800,
                                 checkpoint_iterations=(800,))
    trainer = Trainer(small_dataset, config)
    trainer.run()
    images = trainer.train_set.images
    np.testing.assert_array_equal(trainer.nets.input_shift, images.mean(axis=0))
    recon = trainer.nets.decode_array(trainer.nets.encode_array(images))
    mean_image = np.broadcast_to(images.mean(axis=0), images.shape)
    assert mean_ssd_arrays(recon, images) < mean_ssd_arrays(mean_image, images)
