"""Shared fixtures: a small single-cell pipeline that exercises every stage
without the runtime of the full desk-scale configuration."""

import numpy as np
import pytest

from advpower.config import NetworkConfig
from advpower.dataset import generate_dataset, normalization_stats, split
from advpower.network import LayerSpec, ModelParams, TrainConfig, build_arch, train


@pytest.fixture(scope="session")
def tiny_config():
    return NetworkConfig(L=1, K=2, M=4, mc_realizations=60)


@pytest.fixture(scope="session")
def tiny_dataset(tiny_config):
    return generate_dataset(tiny_config, 60, "mr", seed=5)


@pytest.fixture(scope="session")
def tiny_splits(tiny_dataset):
    # 40 / 10 / 10
    return split(tiny_dataset, (2 / 3, 1 / 6, 1 / 6), seed=5)


@pytest.fixture(scope="session")
def tiny_stats(tiny_splits):
    return normalization_stats(tiny_splits[0])


@pytest.fixture(scope="session")
def tiny_model(tiny_config, tiny_splits, tiny_stats):
    """One m1 model trained on the tiny dataset; good enough for attack and
    evaluation tests that need a real (non-degenerate) network."""
    tr, va, _ = tiny_splits
    tc = TrainConfig(max_epochs=80, patience=80, batch_size=16, seed=5)
    init = build_arch("m1", tiny_config, tiny_stats, 0, 5)
    model, _ = train(init, tr.positions_matrix(), tr.cell_targets(0),
                     va.positions_matrix(), va.cell_targets(0), tc)
    return model


@pytest.fixture
def make_linear_model():
    """Factory for single-layer linear models with hand-checkable gradients.

    forward(x) = ((x - mean) / std) @ W + b, times power_scale."""
    def _make(W, b, mean=None, std=None, scale=1.0):
        W = np.asarray(W, dtype=float)
        b = np.asarray(b, dtype=float)
        d = W.shape[0]
        mean = np.zeros(d) if mean is None else np.asarray(mean, dtype=float)
        std = np.ones(d) if std is None else np.asarray(std, dtype=float)
        return ModelParams(arch="m1", cell_index=0,
                           layers=[LayerSpec(W.shape[1], "linear")],
                           weights=[W], biases=[b], x_mean=mean, x_std=std,
                           power_scale=float(scale))
    return _make
