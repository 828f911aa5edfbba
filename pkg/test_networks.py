"""
Tests for the encoder, decoder and boundary nets, weight initialization and
the composite-loss gradient checks.
"""

import numpy as np
import pytest

from src.errors import ConfigurationError
from src.models.networks import (BOUNDARY, DECODER, ENCODER, BoundaryDecoderNets, NetworkConfig,
                                 init_weights)
from src.models.tensor import sq_err_loss
from src.utils.gradcheck import TOLERANCE, composite_checks, grad_check


def test_default_topology():
    nets = BoundaryDecoderNets.create(NetworkConfig(), seed=0)
    assert nets.encoder.sizes == (676, 256, 64, 16)
    assert nets.decoder.sizes == (16, 64, 256, 676)
    assert nets.boundary.sizes == (5, 32, 32, 16)


def test_zero_initialized_nets(compact_network):
    nets = BoundaryDecoderNets.create(compact_network, seed=0, scheme='zeros')
    image = np.random.default_rng(0).uniform(size=(1, compact_network.image_pixels))
    assert np.all(nets.encode_array(image) == 0.0)
    assert np.all(nets.decode_array(np.ones((1, compact_network.latent_dim))) == 0.5)
    assert np.all(nets.boundary_map(np.ones((1, 5))).data == 0.0)


def test_forward_is_deterministic(compact_network):
    nets = BoundaryDecoderNets.create(compact_network, seed=4)
    image = np.random.default_rng(1).uniform(size=(2, compact_network.image_pixels))
    np.testing.assert_array_equal(nets.encode_array(image), nets.encode_array(image))
    np.testing.assert_array_equal(nets.encode(image).data, nets.encode_array(image))
    params = np.full((1, 5), 0.5)
    np.testing.assert_array_equal(nets.predict(params), nets.predict(params))


def test_decoder_output_in_unit_interval(compact_network):
    nets = BoundaryDecoderNets.create(compact_network, seed=2)
    out = nets.decode_array(np.random.default_rng(0).normal(scale=5.0, size=(4, compact_network.latent_dim)))
    assert np.all((out >= 0.0) & (out <= 1.0))


def test_init_same_seed_same_weights(compact_network):
    a = init_weights(compact_network, seed=7)
    b = init_weights(compact_network, seed=7)
    c = init_weights(compact_network, seed=8)
    assert all(np.array_equal(a[n].data, b[n].data) for n in a)
    assert any(not np.array_equal(a[n].data, c[n].data) for n in a)


def test_init_weight_bounds():
    store = init_weights(NetworkConfig(), seed=0)
    for name, tensor in store.items():
        if name.endswith('.bias'):
            assert np.all(tensor.data == 0.0), name
        else:
            fan_in, fan_out = tensor.shape
            assert np.all(np.abs(tensor.data) <= np.sqrt(6.0 / (fan_in + fan_out))), name


def test_width_mismatch_raises(compact_network):
    nets = BoundaryDecoderNets.create(compact_network, seed=0)
    with pytest.raises(ConfigurationError):
        nets.encode(np.ones((1, compact_network.image_pixels + 1)))


def test_store_mismatch_raises(compact_network):
    store = init_weights(NetworkConfig(latent_dim=4, image_pixels=16, encoder_hidden=(8,),
                                       decoder_hidden=(8,), boundary_hidden=(4,)), seed=0)
    with pytest.raises(ConfigurationError):
        BoundaryDecoderNets(compact_network, store)


def signs(stack, inputs, store):
    masks, _ = stack.relu_signs(inputs, store)
    return np.concatenate([m.reshape(-1) for m in masks])


def test_encoder_gradient(compact_network):
    nets = BoundaryDecoderNets.create(compact_network, seed=5)
    images = np.random.default_rng(5).uniform(size=(2, compact_network.image_pixels))
    zeros = np.zeros((2, compact_network.latent_dim))
    names = nets.store.names(ENCODER)
    error = grad_check(lambda: sq_err_loss(nets.encode(images), zeros), nets.store,
                       names=names, floor=1e-6,
                       pattern=lambda: signs(nets.encoder, images, nets.store))
    assert error < TOLERANCE


def test_decoder_gradient(compact_network):
    nets = BoundaryDecoderNets.create(compact_network, seed=6)
    rng = np.random.default_rng(6)
    latents = rng.normal(size=(2, compact_network.latent_dim))
    target = rng.uniform(size=(2, compact_network.image_pixels))
    error = grad_check(lambda: sq_err_loss(nets.decode(latents), target), nets.store,
                       names=nets.store.names(DECODER), floor=1e-6,
                       pattern=lambda: signs(nets.decoder, latents, nets.store))
    assert error < TOLERANCE


def test_boundary_gradient_through_decoder(compact_network):
    nets = BoundaryDecoderNets.create(compact_network, seed=7)
    rng = np.random.default_rng(7)
    params = rng.uniform(size=(3, 5))
    target = rng.uniform(size=(3, compact_network.image_pixels))
    error = grad_check(lambda: sq_err_loss(nets.decode(nets.boundary_map(params)), target), nets.store,
                       names=nets.store.names(BOUNDARY), floor=1e-6,
                       pattern=lambda: np.concatenate([
                           signs(nets.boundary, params, nets.store),
                           signs(nets.decoder, nets.boundary_map(params).data, nets.store)]))
    assert error < TOLERANCE


@pytest.mark.parametrize('seed', [0, 5, 8, 13])
def test_composite_checks_pass_without_leaks(seed):
    results = composite_checks(seed=seed)
    assert set(results) == {'L1', 'L2', 'L3', 'BD', 'AE_BD', 'DC_BD'}
    for check, result in results.items():
        assert max(result['errors'].values()) < TOLERANCE, check
        assert result['leaks'] == [], check
    assert set(results['BD']['errors']) == {'decoder', 'boundary'}
    assert set(results['L2']['errors']) == {'encoder'}


def test_corrupted_gradient_is_detected():
    results = composite_checks(seed=0, corrupt=True)
    assert max(results['L1']['errors'].values()) > TOLERANCE


def test_input_shift_centres_encoder_inputs(compact_network):
    nets = BoundaryDecoderNets.create(compact_network, seed=3)
    images = np.random.default_rng(3).uniform(size=(4, compact_network.image_pixels))
    centred = nets.encode_array(images - images.mean(axis=0))
    nets.set_input_shift(images.mean(axis=0))
    np.testing.assert_array_equal(nets.encode_array(images), centred)
    np.testing.assert_array_equal(nets.encode(images).data, centred)
    with pytest.raises(ConfigurationError):
        nets.set_input_shift(np.zeros(compact_network.image_pixels + 1))
