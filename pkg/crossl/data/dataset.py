"""In-memory multimodal dataset and batch types."""

import dataclasses
import hashlib
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from crossl.core.config import ModalityConfig
from crossl.core.errors import DatasetError

SPLITS = ("train", "val", "test")


def _frozen(array: np.ndarray, dtype) -> np.ndarray:
    out = np.array(array, dtype=dtype)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class MultimodalBatch:
    """One batch: per-modality windows, availability flags, optional labels."""

    windows: tuple[Optional[np.ndarray], ...]
    available: np.ndarray
    labels: Optional[np.ndarray]
    indices: np.ndarray

    @property
    def size(self) -> int:
        return len(self.indices)


@dataclass(frozen=True, eq=False)
class MultimodalDataset:
    """
    Windows of M modalities sharing N samples.

    Invariants (checked on construction): every modality agrees on N, labels
    lie in [0, num_classes), and windows of unavailable modalities are all
    zeros. Arrays are stored read-only; transforms return new datasets.
    """

    modalities: tuple[ModalityConfig, ...]
    windows: tuple[np.ndarray, ...]
    availability: np.ndarray
    splits: np.ndarray
    num_classes: int
    labels: Optional[np.ndarray] = None
    labeled: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        set_ = object.__setattr__
        set_(self, "modalities", tuple(self.modalities))
        set_(self, "windows", tuple(_frozen(w, np.float64) for w in self.windows))
        set_(self, "availability", _frozen(self.availability, bool))
        set_(self, "splits", _frozen(self.splits, "<U5"))
        if self.labels is not None:
            set_(self, "labels", _frozen(self.labels, np.int64))
            labeled = np.ones(len(self.labels), dtype=bool) if self.labeled is None else self.labeled
            set_(self, "labeled", _frozen(labeled, bool))
        elif self.labeled is not None:
            raise DatasetError("labeled flags given without labels", field="labeled")
        self.validate()

    def validate(self) -> None:
        """
        Check shape, label and availability invariants.

        Raises:
            DatasetError: Naming the offending field
        """
        if len(self.windows) != len(self.modalities):
            raise DatasetError(
                f"{len(self.windows)} window tensors for {len(self.modalities)} modalities", field="windows"
            )
        n = self.size
        for index, (modality, window) in enumerate(zip(self.modalities, self.windows)):
            expected = (n, modality.window_len, modality.channels)
            if window.shape != expected:
                raise DatasetError(f"shape {window.shape}, expected {expected}", field=f"modalities[{index}]")
            if not np.isfinite(window).all():
                raise DatasetError("non-finite values", field=f"modalities[{index}]")
        if self.availability.shape != (n, len(self.modalities)):
            raise DatasetError(f"shape {self.availability.shape}", field="availability")
        for index, window in enumerate(self.windows):
            missing = ~self.availability[:, index]
            if missing.any() and np.any(window[missing] != 0.0):
                raise DatasetError(f"modality {index} unavailable but not zero-filled", field="availability")
        if self.splits.shape != (n,) or not np.isin(self.splits, SPLITS).all():
            raise DatasetError(f"splits must be one of {SPLITS} per window", field="splits")
        if self.num_classes < 1:
            raise DatasetError("must be positive", field="num_classes")
        if self.labels is not None:
            if self.labels.shape != (n,):
                raise DatasetError(f"{self.labels.shape[0]} labels for {n} windows", field="labels")
            if n and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
                raise DatasetError(f"labels must lie in [0, {self.num_classes})", field="labels")

    @property
    def size(self) -> int:
        return len(self.splits)

    @property
    def num_modalities(self) -> int:
        return len(self.modalities)

    def indices(self, split: str, labeled_only: bool = False) -> np.ndarray:
        """
        Window indices of one split, in dataset order.

        Args:
            split: "train", "val" or "test"
            labeled_only: Keep only windows whose label survived subsampling
        """
        if split not in SPLITS:
            raise DatasetError(f"unknown split {split!r}", field="splits")
        selected = self.splits == split
        if labeled_only:
            if self.labeled is None:
                raise DatasetError("dataset has no labels", field="labels")
            selected &= self.labeled
        return np.flatnonzero(selected)

    def batch(self, indices: Sequence[int] | np.ndarray) -> MultimodalBatch:
        indices = np.asarray(indices, dtype=np.int64)
        return MultimodalBatch(
            windows=tuple(w[indices] for w in self.windows),
            available=self.availability[indices],
            labels=None if self.labels is None else self.labels[indices],
            indices=indices,
        )

    def replace(self, **changes) -> "MultimodalDataset":
        """New dataset with some fields replaced (validated again)."""
        return dataclasses.replace(self, **changes)

    def equals(self, other: "MultimodalDataset") -> bool:
        """Exact equality of every field, bit for bit."""

        def same(a: Optional[np.ndarray], b: Optional[np.ndarray]) -> bool:
            if a is None or b is None:
                return a is b
            return a.shape == b.shape and a.dtype == b.dtype and a.tobytes() == b.tobytes()

        return (
            self.modalities == other.modalities
            and self.num_classes == other.num_classes
            and all(same(a, b) for a, b in zip(self.windows, other.windows))
            and len(self.windows) == len(other.windows)
            and same(self.availability, other.availability)
            and same(self.splits, other.splits)
            and same(self.labels, other.labels)
            and same(self.labeled, other.labeled)
        )


def dataset_fingerprint(dataset: MultimodalDataset) -> str:
    """Hex sha256 over every payload; keys experiment caches."""
    digest = hashlib.sha256()
    for modality, window in zip(dataset.modalities, dataset.windows):
        digest.update(modality.model_dump_json().encode("utf-8"))
        digest.update(window.tobytes())
    digest.update(dataset.availability.tobytes())
    digest.update(dataset.splits.tobytes())
    digest.update(str(dataset.num_classes).encode("ascii"))
    if dataset.labels is not None and dataset.labeled is not None:
        digest.update(dataset.labels.tobytes())
        digest.update(dataset.labeled.tobytes())
    return digest.hexdigest()
