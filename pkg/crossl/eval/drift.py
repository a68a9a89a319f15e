"""How far Z moves when one modality is hidden."""

from typing import List

import numpy as np
from pydantic import BaseModel, Field

from crossl.data import MultimodalDataset, make_batches
from crossl.model import ModelState
from crossl.ssl import MaskMatrix
from crossl.train.common import EVAL_BATCH_SIZE, embed


class ModalityDrift(BaseModel):
    name: str
    drift: float = Field(..., ge=0.0, description="Mean squared shift of Z over mean squared norm of Z")


class DriftReport(BaseModel):
    """Per-modality embedding drift on one split."""

    split: str
    windows: int
    modalities: List[ModalityDrift]


def embedding_drift(state: ModelState, dataset: MultimodalDataset, split: str = "test") -> DriftReport:
    """
    Relative change of the global embedding when each modality is masked.

    For modality j: mean ||Z - Z_without_j||^2 over the split, divided by
    mean ||Z||^2. A backbone pre-trained with spatial masking should keep
    this small.

    Args:
        state: Model to probe
        dataset: Source windows
        split: Split to average over

    Returns:
        DriftReport with one entry per modality, in model order
    """
    m, k = state.num_modalities, state.embedding_dim
    shift = np.zeros(m)
    norm = 0.0
    count = 0
    for batch in make_batches(dataset, split, EVAL_BATCH_SIZE):
        z = embed(batch, state).value
        norm += float((z * z).sum())
        count += batch.size
        for j in range(m):
            keep = np.ones((batch.size, m, k), dtype=bool)
            keep[:, j, :] = False
            shifted = embed(batch, state, extra=MaskMatrix(keep)).value
            shift[j] += float(((z - shifted) ** 2).sum())

    scale = norm if norm > 0 else 1.0
    return DriftReport(
        split=split,
        windows=count,
        modalities=[
            ModalityDrift(name=modality.name, drift=float(shift[j] / scale))
            for j, modality in enumerate(state.modalities)
        ],
    )
