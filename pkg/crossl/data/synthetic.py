"""Synthetic multimodal benchmark driven by a shared latent class.

Every modality observes the class through the frequency of a sinusoid
(the cross-modal signal), plus a class-independent nuisance sinusoid and
Gaussian noise that are specific to that modality.
"""

import numpy as np

from crossl.core.config import SyntheticConfig
from crossl.core.log import logger
from crossl.data.dataset import MultimodalDataset
from crossl.kernel import Rng

TRAIN_FRACTION = 0.70
VAL_FRACTION = 0.15


def class_frequency(label: int) -> int:
    """Cycles per window of the class signal: 2, 4, 6, ..."""
    return 2 * (label + 1)


def _stratified_splits(labels: np.ndarray, num_classes: int, rng: Rng) -> np.ndarray:
    splits = np.empty(len(labels), dtype="<U5")
    for label in range(num_classes):
        members = np.flatnonzero(labels == label)
        members = members[rng.permutation(len(members))]
        n_train = int(round(TRAIN_FRACTION * len(members)))
        n_val = int(round(VAL_FRACTION * len(members)))
        splits[members[:n_train]] = "train"
        splits[members[n_train : n_train + n_val]] = "val"
        splits[members[n_train + n_val :]] = "test"
    return splits


def generate_synthetic(cfg: SyntheticConfig) -> MultimodalDataset:
    """
    Generate a labelled dataset with stratified 70/15/15 splits.

    Channel c of modality m for a sample of class y is
    ``sin(2*pi*f_y*t/T_m + phase + c*pi/4) / (1 + c/4)`` plus
    ``nuisance_std * sin(2*pi*g*t/T_m + psi)`` with a random nuisance
    frequency g, plus i.i.d. noise. Phases and nuisance terms are drawn per
    sample and per modality. The dataset is a pure function of ``cfg``.

    Args:
        cfg: Generator settings

    Returns:
        MultimodalDataset with every modality available
    """
    for modality in cfg.modalities:
        if class_frequency(cfg.num_classes - 1) * 2 >= modality.window_len:
            logger.warning(
                "Class frequencies exceed the Nyquist limit of a modality",
                extra={"modality": modality.name, "window_len": modality.window_len},
            )

    rng = Rng(cfg.seed, ("synthetic",))
    n = cfg.num_classes * cfg.samples_per_class
    labels = np.repeat(np.arange(cfg.num_classes), cfg.samples_per_class)
    labels = labels[rng.child("labels").permutation(n)]
    frequencies = np.array([class_frequency(int(y)) for y in labels], dtype=np.float64)

    windows = []
    for modality in cfg.modalities:
        stream = rng.child(f"modality/{modality.name}")
        t = np.arange(modality.window_len, dtype=np.float64) / modality.window_len
        channels = np.arange(modality.channels, dtype=np.float64)

        phase = stream.child("phase").uniform(n) * 2.0 * np.pi
        signal = np.sin(
            2.0 * np.pi * frequencies[:, None, None] * t[None, :, None]
            + phase[:, None, None]
            + channels[None, None, :] * np.pi / 4.0
        ) / (1.0 + channels / 4.0)

        nuisance_freq = 1.0 + stream.child("nuisance_freq").uniform(n) * (modality.window_len / 4.0 - 1.0)
        nuisance_phase = stream.child("nuisance_phase").uniform(n) * 2.0 * np.pi
        nuisance = np.sin(
            2.0 * np.pi * nuisance_freq[:, None] * t[None, :] + nuisance_phase[:, None]
        )[:, :, None]

        noise = stream.child("noise").normal((n, modality.window_len, modality.channels), cfg.noise_std)
        windows.append(signal + cfg.nuisance_std * nuisance + noise)

    splits = _stratified_splits(labels, cfg.num_classes, rng.child("splits"))
    dataset = MultimodalDataset(
        modalities=tuple(cfg.modalities),
        windows=tuple(windows),
        availability=np.ones((n, len(cfg.modalities)), dtype=bool),
        splits=splits,
        num_classes=cfg.num_classes,
        labels=labels,
    )
    logger.info(
        "Generated synthetic dataset",
        extra={"samples": n, "modalities": len(cfg.modalities), "seed": cfg.seed},
    )
    return dataset
