"""Shared fixtures: a tiny architecture and dataset that train in seconds."""

from typing import Optional

import numpy as np
import pytest

from crossl.core.config import (
    AggregatorSpec,
    ConvLayerSpec,
    EncoderSpec,
    ModalityConfig,
    SyntheticConfig,
    TrainConfig,
)
from crossl.data import MultimodalDataset, generate_synthetic
from crossl.kernel import Rng
from crossl.model import ModelState, init_model

TINY_MODALITIES = [
    ModalityConfig(name="acc", channels=2, window_len=16),
    ModalityConfig(name="gyro", channels=2, window_len=20),
    ModalityConfig(name="hr", channels=1, window_len=14),
]


def make_dataset(
    n: int,
    m: int = 3,
    num_classes: int = 4,
    splits: Optional[np.ndarray] = None,
    labels: Optional[np.ndarray] = None,
    seed: int = 0,
    window_len: int = 2,
) -> MultimodalDataset:
    """Random dataset with short windows, for data-layer tests."""
    rng = np.random.default_rng(seed)
    modalities = tuple(ModalityConfig(name=f"m{j}", channels=1, window_len=window_len) for j in range(m))
    if splits is None:
        splits = np.array(["train"] * n)
    if labels is None:
        labels = np.arange(n) % num_classes
    return MultimodalDataset(
        modalities=modalities,
        windows=tuple(rng.normal(size=(n, window_len, 1)) for _ in range(m)),
        availability=np.ones((n, m), dtype=bool),
        splits=splits,
        num_classes=num_classes,
        labels=labels,
    )


@pytest.fixture
def tiny_encoder() -> EncoderSpec:
    layer = ConvLayerSpec(out_channels=4, kernel_width=3, stride=1)
    return EncoderSpec(layers=[layer, ConvLayerSpec(out_channels=4, kernel_width=3, stride=2), layer], embedding_dim=4)


@pytest.fixture
def tiny_aggregator() -> AggregatorSpec:
    return AggregatorSpec(hidden=[8], output_dim=6)


@pytest.fixture
def tiny_model(tiny_encoder, tiny_aggregator) -> ModelState:
    return init_model(TINY_MODALITIES, tiny_encoder, tiny_aggregator, 3, Rng(0, ("init",)))


@pytest.fixture
def tiny_synthetic() -> SyntheticConfig:
    return SyntheticConfig(
        num_classes=3,
        modalities=TINY_MODALITIES,
        samples_per_class=20,
        noise_std=0.05,
        nuisance_std=0.2,
        seed=0,
    )


@pytest.fixture
def tiny_dataset(tiny_synthetic) -> MultimodalDataset:
    return generate_synthetic(tiny_synthetic)


@pytest.fixture
def tiny_train() -> TrainConfig:
    return TrainConfig(
        ssl_lr=1e-3,
        ssl_epochs=3,
        cls_epochs=4,
        freeze_epochs=2,
        patience=2,
        batch_size=8,
        seed=0,
    )
