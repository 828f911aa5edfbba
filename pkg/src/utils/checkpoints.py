"""Weight checkpoints in the shared container format."""

import os

import numpy as np

from src.config import TrainConfig
from src.errors import DatasetIOError, SchemaVersionError
from src.models.networks import BoundaryDecoderNets, NetworkConfig, init_weights
from src.models.report import LatentStore
from src.utils.container import read_container, write_container

CHECKPOINT_VERSION = 1


def checkpoint_name(variant, seed, iteration):
    return f'{variant.lower()}-seed{seed}-it{iteration:06d}.ckpt'


def save_checkpoint(path, nets, config, iteration, latent_store=None):
    header = {
        'kind': 'checkpoint',
        'schema_version': CHECKPOINT_VERSION,
        'variant': config.variant,
        'seed': config.seed,
        'iteration': iteration,
        'network': nets.config.to_dict(),
        'train_config': config.to_dict(),
    }
    blocks = {f'param:{name}': tensor.data for name, tensor in nets.store.items()}
    if nets.input_shift is not None:
        blocks['shift:encoder'] = nets.input_shift
    if latent_store is not None:
        blocks['knn:vec_train'] = latent_store.vec_train
        blocks['knn:latent_train'] = latent_store.latent_train
        blocks['knn:case_indices'] = latent_store.case_indices.astype(np.float64)
    return write_container(path, header, blocks)


class LoadedCheckpoint:
    def __init__(self, path, header, nets, latent_store):
        self.path = path
        self.variant = header['variant']
        self.seed = header['seed']
        self.iteration = header['iteration']
        self.config = TrainConfig.from_dict(header['train_config'])
        self.nets = nets
        self.latent_store = latent_store

    def __repr__(self):
        return f'<LoadedCheckpoint {self.variant} seed={self.seed} it={self.iteration}>'

    @property
    def label(self):
        return f'{self.variant.lower()}-s{self.seed}-it{self.iteration}'


def load_checkpoint(path):
    header, blocks = read_container(path)
    if header.get('kind') != 'checkpoint':
        raise DatasetIOError(f'{path} is not a weight checkpoint')
    if header.get('schema_version') != CHECKPOINT_VERSION:
        raise SchemaVersionError(
            f'{path}: checkpoint version {header.get("schema_version")}, expected {CHECKPOINT_VERSION}')
    net_config = NetworkConfig.from_dict(header['network'])
    store = init_weights(net_config, seed=0, scheme='zeros')
    params = {name[len('param:'):]: array for name, array in blocks.items()
              if name.startswith('param:')}
    missing = sorted(set(store) - set(params))
    if missing:
        raise DatasetIOError(f'{path}: checkpoint lacks parameters {missing}')
    store.load_state(params)
    nets = BoundaryDecoderNets(net_config, store)
    nets.set_input_shift(blocks.get('shift:encoder'))
    latent_store = None
    if 'knn:vec_train' in blocks:
        latent_store = LatentStore(vec_train=blocks['knn:vec_train'],
                                   latent_train=blocks['knn:latent_train'],
                                   case_indices=blocks['knn:case_indices'].astype(np.int64))
    return LoadedCheckpoint(os.fspath(path), header, nets, latent_store)
