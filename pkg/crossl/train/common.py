"""Forward passes and seeding shared by every training stage."""

from typing import Optional

import numpy as np

from crossl.core.config import AggregatorSpec, EncoderSpec
from crossl.data import MultimodalBatch, MultimodalDataset, make_batches
from crossl.kernel import Rng, Tensor
from crossl.model import ModelState, aggregate, encode_all, init_model
from crossl.ssl import MaskMatrix, apply_mask, forced_modality_mask

EVAL_BATCH_SIZE = 256


def epoch_seed(seed: int, stage: str, epoch: int) -> int:
    """Shuffle seed of one epoch of one stage."""
    return int(Rng(seed, ("shuffle", stage, str(epoch))).integers(0, 2**62))


def new_model(
    dataset: MultimodalDataset,
    encoder: EncoderSpec,
    aggregator: AggregatorSpec,
    seed: int,
) -> ModelState:
    """Freshly initialized model shaped for ``dataset``."""
    return init_model(dataset.modalities, encoder, aggregator, dataset.num_classes, Rng(seed, ("init",)))


def embed(batch: MultimodalBatch, state: ModelState, extra: Optional[MaskMatrix] = None) -> Tensor:
    """
    Global embeddings of a batch without stochastic masking.

    Unavailable modalities are always masked; ``extra`` hides more entries.
    """
    q = encode_all(batch, state)
    mask = forced_modality_mask(batch.available, state.num_modalities, state.embedding_dim)
    if extra is not None:
        mask = mask & extra
    return aggregate(apply_mask(q, mask), state)


def embed_split(state: ModelState, dataset: MultimodalDataset, split: str) -> tuple[np.ndarray, np.ndarray]:
    """
    Embed every window of one split.

    Returns:
        (window indices, Z values [n, D])
    """
    indices = dataset.indices(split)
    rows = [embed(batch, state).value for batch in make_batches(dataset, split, EVAL_BATCH_SIZE)]
    values = np.concatenate(rows) if rows else np.zeros((0, state.global_dim))
    return indices, values
