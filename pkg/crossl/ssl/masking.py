"""Binary masks over intermediate embeddings Q [N, M, K].

A mask bit of 1 keeps the entry, 0 zeroes it. Kept entries are not rescaled,
so a training-time spatial mask and an inference-time missing-modality mask
look identical to the aggregator.
"""

from dataclasses import dataclass

import numpy as np

from crossl.core.config import MaskSpec
from crossl.core.errors import ConfigError, ShapeError
from crossl.kernel import Rng, Tensor, mask_multiply


@dataclass(frozen=True)
class MaskMatrix:
    """Keep (True) / drop (False) bits of shape [N, M, K]."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        bits = np.array(self.bits, dtype=bool)
        if bits.ndim != 3:
            raise ShapeError(f"mask must be [N, M, K], got shape {bits.shape}")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.bits.shape  # type: ignore[return-value]

    def __and__(self, other: "MaskMatrix") -> "MaskMatrix":
        if self.shape != other.shape:
            raise ShapeError(f"mask shapes {self.shape} and {other.shape} differ")
        return MaskMatrix(self.bits & other.bits)

    @classmethod
    def ones(cls, n: int, m: int, k: int) -> "MaskMatrix":
        return cls(np.ones((n, m, k), dtype=bool))


def _sample_one(spec: MaskSpec, n: int, m: int, k: int, rng: Rng) -> MaskMatrix:
    if spec.strategy == "random":
        # keep with probability 1 - rate
        return MaskMatrix(rng.uniform((n, m, k)) >= spec.rate)

    # uniform choice of `count` modalities per sample, without replacement
    order = np.argsort(rng.uniform((n, m)), axis=1, kind="stable")
    hidden = np.zeros((n, m), dtype=bool)
    np.put_along_axis(hidden, order[:, : spec.count], True, axis=1)
    return MaskMatrix(np.repeat(~hidden[:, :, None], k, axis=2))


def sample_masks(spec: MaskSpec, n: int, m: int, k: int, rng: Rng) -> tuple[MaskMatrix, MaskMatrix]:
    """
    Draw the masks of the two pre-training views independently.

    Args:
        spec: Masking strategy
        n: Batch size
        m: Number of modalities
        k: Intermediate embedding size
        rng: Mask stream; consumed sequentially, first view then second

    Returns:
        (first view mask, second view mask); identical masks are not rejected

    Raises:
        ConfigError: If a spatial count exceeds the number of modalities
    """
    if min(n, m, k) < 1:
        raise ConfigError(f"mask dims must be positive, got N={n}, M={m}, K={k}")
    if spec.strategy == "spatial" and spec.count > m:
        raise ConfigError(f"masking.count={spec.count} exceeds the {m} available modalities")
    return _sample_one(spec, n, m, k, rng), _sample_one(spec, n, m, k, rng)


def apply_mask(q: Tensor, mask: MaskMatrix) -> Tensor:
    """
    Zero the masked entries of Q.

    Masked entries receive zero gradient.

    Raises:
        ShapeError: If the shapes differ
    """
    if q.shape != mask.shape:
        raise ShapeError(f"mask shape {mask.shape} does not match embeddings {q.shape}")
    return mask_multiply(q, mask.bits)


def forced_modality_mask(available: np.ndarray, m: int, k: int) -> MaskMatrix:
    """
    Mask that hides exactly the unavailable modalities.

    Args:
        available: Availability flags [N, M]
        m: Number of modalities
        k: Intermediate embedding size

    Returns:
        MaskMatrix with all-zero rows where ``available`` is False
    """
    available = np.asarray(available, dtype=bool)
    if available.ndim != 2 or available.shape[1] != m:
        raise ShapeError(f"availability must be [N, {m}], got shape {available.shape}")
    return MaskMatrix(np.repeat(available[:, :, None], k, axis=2))
