"""Dataset transforms: label subsampling and missing-modality simulation."""

import math
from typing import Literal, Optional

import numpy as np
from pydantic import Field

from crossl.core.config import Section
from crossl.core.errors import ConfigError, LabelError, ScenarioError
from crossl.core.log import logger
from crossl.data.dataset import MultimodalDataset
from crossl.kernel import Rng

MissingPhase = Literal["none", "inference_only", "finetune_and_inference"]

AFFECTED_SPLITS: dict[str, tuple[str, ...]] = {
    "none": (),
    "inference_only": ("test",),
    "finetune_and_inference": ("train", "val", "test"),
}


class MissingScenario(Section):
    """Which splits lose modalities, and how many per sample."""

    phase: MissingPhase = Field(default="none", description="Where modalities go missing")
    missing_count: int = Field(default=1, ge=0, description="Modalities removed per affected sample")
    seed: int = Field(default=0, description="Seed of the per-sample selection")


def _class_quotas(counts: np.ndarray, total: int) -> np.ndarray:
    exact = total * counts / counts.sum()
    quotas = np.floor(exact).astype(np.int64)
    remainder = total - int(quotas.sum())
    order = np.argsort(-(exact - quotas), kind="stable")
    quotas[order[:remainder]] += 1
    # every class that has training windows keeps at least one label
    for label in np.flatnonzero((counts > 0) & (quotas == 0)):
        donor = int(np.argmax(quotas))
        if quotas[donor] > 1:
            quotas[donor] -= 1
        quotas[label] = 1
    return np.minimum(quotas, counts)


def subsample_labels(dataset: MultimodalDataset, fraction: float, seed: int) -> MultimodalDataset:
    """
    Keep labels on ceil(fraction * count) training windows, stratified by class.

    Windows are chosen among all training windows, independently of earlier
    subsampling, so reapplying the same (fraction, seed) changes nothing.
    Validation and test labels are untouched.

    Args:
        dataset: Labelled dataset
        fraction: Share of training labels to keep, in (0, 1]
        seed: Selection seed

    Returns:
        Dataset whose ``labeled`` flags mark the surviving training labels

    Raises:
        ConfigError: If fraction is outside (0, 1]
        LabelError: If the dataset has no labels
    """
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"label fraction must lie in (0, 1], got {fraction}")
    if dataset.labels is None or dataset.labeled is None:
        raise LabelError("subsample_labels needs a labelled dataset")

    train = dataset.indices("train")
    train_labels = dataset.labels[train]
    counts = np.bincount(train_labels, minlength=dataset.num_classes)
    total = math.ceil(round(fraction * len(train), 9))
    quotas = _class_quotas(counts, total) if len(train) else counts

    rng = Rng(seed, ("labels",))
    selected = np.zeros(dataset.size, dtype=bool)
    for label in range(dataset.num_classes):
        members = train[train_labels == label]
        order = rng.child(f"class/{label}").permutation(len(members))
        selected[members[order[: quotas[label]]]] = True

    labeled = dataset.labeled.copy()
    labeled[train] &= selected[train]
    logger.debug(
        "Subsampled labels",
        extra={"fraction": fraction, "seed": seed, "kept": int(labeled[train].sum()), "train": len(train)},
    )
    return dataset.replace(labeled=labeled)


def simulate_missing(
    dataset: MultimodalDataset,
    scenario: MissingScenario,
    rng: Optional[Rng] = None,
) -> MultimodalDataset:
    """
    Remove modalities from the splits the scenario affects.

    Each affected window loses ``missing_count`` modalities chosen uniformly
    without replacement; their windows are zero-filled and flagged
    unavailable.

    Args:
        dataset: Source dataset
        scenario: Phase and per-sample count
        rng: Selection stream (defaults to one derived from ``scenario.seed``)

    Returns:
        Dataset with updated availability

    Raises:
        ScenarioError: If missing_count >= M
    """
    m = dataset.num_modalities
    if scenario.missing_count >= m:
        raise ScenarioError(f"missing_count={scenario.missing_count} must be smaller than M={m}")
    affected = np.isin(dataset.splits, AFFECTED_SPLITS[scenario.phase])
    if scenario.missing_count == 0 or not affected.any():
        return dataset

    rng = rng or Rng(scenario.seed, ("missing",))
    order = np.argsort(rng.uniform((dataset.size, m)), axis=1, kind="stable")
    dropped = np.zeros((dataset.size, m), dtype=bool)
    np.put_along_axis(dropped, order[:, : scenario.missing_count], True, axis=1)
    dropped &= affected[:, None]

    availability = dataset.availability & ~dropped
    windows = []
    for index, window in enumerate(dataset.windows):
        filled = window.copy()
        filled[~availability[:, index]] = 0.0
        windows.append(filled)
    logger.debug(
        "Simulated missing modalities",
        extra={"phase": scenario.phase, "missing_count": scenario.missing_count, "affected": int(affected.sum())},
    )
    return dataset.replace(availability=availability, windows=tuple(windows))
