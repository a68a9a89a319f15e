"""Datasets, storage, synthetic generation and transforms."""

from crossl.data.batching import make_batches
from crossl.data.dataset import (
    SPLITS,
    MultimodalBatch,
    MultimodalDataset,
    dataset_fingerprint,
)
from crossl.data.storage import load_dataset, save_dataset
from crossl.data.synthetic import generate_synthetic
from crossl.data.transforms import MissingScenario, simulate_missing, subsample_labels
