"""Batch iteration."""

from typing import Literal, Optional

from crossl.core.errors import ConfigError
from crossl.data.dataset import MultimodalBatch, MultimodalDataset
from crossl.kernel import Rng

BatchMode = Literal["ssl", "supervised", "eval"]


def make_batches(
    dataset: MultimodalDataset,
    split: str,
    batch_size: int,
    shuffle_seed: Optional[int] = None,
    mode: BatchMode = "eval",
) -> list[MultimodalBatch]:
    """
    Cut one split into batches.

    Args:
        dataset: Source dataset
        split: "train", "val" or "test"
        batch_size: Windows per batch (>= 2)
        shuffle_seed: Seed of the order; None keeps dataset order
        mode: "ssl" drops the final short batch (batch statistics need two
            rows); "supervised" keeps only labelled windows; "eval" keeps
            every window

    Returns:
        Batches in iteration order

    Raises:
        ConfigError: If batch_size < 2
    """
    if batch_size < 2:
        raise ConfigError(f"batch_size must be >= 2, got {batch_size}")
    indices = dataset.indices(split, labeled_only=mode == "supervised")
    if shuffle_seed is not None:
        indices = indices[Rng(shuffle_seed, ("batches", split)).permutation(len(indices))]

    stop = len(indices) - len(indices) % batch_size if mode == "ssl" else len(indices)
    return [dataset.batch(indices[start : start + batch_size]) for start in range(0, stop, batch_size)]
