"""
Shared fixtures: a small 2-level DOE and network sizes small enough that a
few dozen training steps finish in well under a second.
"""

import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from src.config import DOEConfig, TrainConfig
from src.models.dataset import save_dataset
from src.utils.gradcheck import COMPACT_NETWORK
from src.utils.init_data import build_dataset

SMALL_LEVELS = {
    'emc_modulus': (5.0, 30.0),
    'emc_cte': (5.0, 20.0),
    'die_size': (0.8, 1.5),
    'gap_size': (0.2, 1.0),
}


@pytest.fixture
def small_doe():
    """16 cases per layer, 48 in total, 36 of them for training"""
    return DOEConfig(levels=dict(SMALL_LEVELS), n_train=36)


@pytest.fixture
def small_dataset(small_doe):
    return build_dataset(seed=0, doe=small_doe)


@pytest.fixture
def small_dataset_file(small_dataset, tmp_path):
    path = tmp_path / 'small.sbd'
    save_dataset(small_dataset, str(path))
    return str(path)


@pytest.fixture
def compact_network():
    return COMPACT_NETWORK


@pytest.fixture
def tiny_config():
    """Small networks and a short schedule for training tests"""
    return TrainConfig(variant='DC_BD', total_iterations=20, checkpoint_iterations=(10, 20),
                       batch_size=8, latent_dim=4, encoder_hidden=(16,), decoder_hidden=(16,),
                       boundary_hidden=(8,), learning_rate=1e-3, seed=0)
