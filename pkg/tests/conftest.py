import numpy as np
import pytest
import torch

from ncf2.config import DataConfig, ShapeAeConfig, VaeConfig
from ncf2.datagen import generate_dataset
from ncf2.models.ncf import train_shape_autoencoder, train_vae
from ncf2.scenes import object_from_library

torch.set_num_threads(2)


@pytest.fixture(scope="session")
def micro_dataset(tmp_path_factory):
    """Ten small episodes shared by model-level tests."""
    path = tmp_path_factory.mktemp("micro") / "data"
    cfg = DataConfig(episodes=10, n_query=128)
    generate_dataset(cfg, 77, path)
    return path


@pytest.fixture(scope="session")
def micro_vae(micro_dataset, tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "vae.ckpt"
    train_vae(micro_dataset, VaeConfig(epochs=2, max_images=500, seed=1), path)
    return path


@pytest.fixture(scope="session")
def micro_shape(tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "shape.ckpt"
    objs = [object_from_library(c, i) for c in ("mug", "bottle", "bowl") for i in range(4)]
    train_shape_autoencoder(objs, ShapeAeConfig(steps=300, seed=1), path)
    return path
