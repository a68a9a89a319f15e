"""Variance-invariance-covariance objective over two global embeddings.

Each term is a fused differentiable primitive on [N, D] embeddings; the total
combines them with the kernel's ``scale`` and ``add`` so gradients reach both
views.
"""

from dataclasses import dataclass

import numpy as np

from crossl.core.config import LossWeights
from crossl.core.errors import BatchTooSmallError, ShapeError
from crossl.kernel import Tensor, add, scale


@dataclass(frozen=True)
class LossBreakdown:
    """Per-term values of one loss evaluation."""

    invariance: float
    variance_v1: float
    variance_v2: float
    covariance_v1: float
    covariance_v2: float
    total: float


def _require_embeddings(z: Tensor, min_rows: int = 1) -> tuple[int, int]:
    if z.value.ndim != 2:
        raise ShapeError(f"embeddings must be [N, D], got shape {z.shape}")
    n, d = z.shape
    if n < min_rows:
        if min_rows >= 2:
            raise BatchTooSmallError(f"batch statistics need N >= 2, got N={n}")
        raise ShapeError("embeddings must have at least one row")
    return n, d


def invariance_term(z1: Tensor, z2: Tensor) -> Tensor:
    """
    Mean squared difference between the two views: (1/N) sum_i (1/D) sum_j (z1 - z2)^2.

    Raises:
        ShapeError: If the shapes differ or N == 0
    """
    if z1.shape != z2.shape:
        raise ShapeError(f"views have different shapes {z1.shape} and {z2.shape}")
    n, d = _require_embeddings(z1)
    diff = z1.value - z2.value

    def _backward(grad: np.ndarray):
        d_z1 = diff * (2.0 * float(grad) / (n * d))
        return d_z1, -d_z1

    return Tensor.record(np.array(np.mean(diff * diff)), (z1, z2), _backward)


def variance_term(z: Tensor, gamma: float = 1.0, eps_var: float = 1e-4) -> Tensor:
    """
    Hinge on the per-dimension batch standard deviation:
    (1/D) sum_j max(0, gamma - sqrt(Var(z[:, j]) + eps)).

    Var is the population variance (divides by N). The hinge has zero
    gradient at and beyond the kink.

    Raises:
        BatchTooSmallError: If N < 2
    """
    n, d = _require_embeddings(z, min_rows=2)
    centered = z.value - z.value.mean(axis=0)
    std = np.sqrt((centered * centered).mean(axis=0) + eps_var)
    gap = gamma - std
    active = gap > 0

    def _backward(grad: np.ndarray):
        coeff = np.where(active, -1.0 / (n * d * std), 0.0)
        return (centered * coeff * float(grad),)

    return Tensor.record(np.array(np.where(active, gap, 0.0).sum() / d), (z,), _backward)


def covariance_term(z: Tensor) -> Tensor:
    """
    Sum of squared off-diagonal covariance entries, times 1/D.

    The covariance matrix uses the N - 1 estimator.

    Raises:
        BatchTooSmallError: If N < 2
    """
    n, d = _require_embeddings(z, min_rows=2)
    centered = z.value - z.value.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    off = cov - np.diag(np.diag(cov))

    def _backward(grad: np.ndarray):
        # d/dC = (2/D) * off; C symmetric, so d/dcentered = 2 * centered @ d/dC / (N - 1)
        d_centered = centered @ off * (4.0 * float(grad) / (d * (n - 1)))
        return (d_centered - d_centered.mean(axis=0),)

    return Tensor.record(np.array((off * off).sum() / d), (z,), _backward)


def total_loss(z1: Tensor, z2: Tensor, weights: LossWeights) -> tuple[Tensor, LossBreakdown]:
    """
    Weighted objective lambda*s(z1, z2) + mu*[v(z1) + v(z2)] + nu*[c(z1) + c(z2)].

    A weighted sum, not normalized by the weight total.

    Args:
        z1: Global embeddings of the first view [N, D]
        z2: Global embeddings of the second view [N, D]
        weights: Term weights, variance target and stability scalar

    Returns:
        (differentiable scalar loss, per-term breakdown)

    Raises:
        ShapeError: If the views differ in shape
        BatchTooSmallError: If N < 2
    """
    inv = invariance_term(z1, z2)
    var1 = variance_term(z1, weights.gamma, weights.eps_var)
    var2 = variance_term(z2, weights.gamma, weights.eps_var)
    cov1 = covariance_term(z1)
    cov2 = covariance_term(z2)

    loss = add(
        scale(inv, weights.lambda_inv),
        add(scale(add(var1, var2), weights.mu_var), scale(add(cov1, cov2), weights.nu_cov)),
    )
    breakdown = LossBreakdown(
        invariance=inv.item(),
        variance_v1=var1.item(),
        variance_v2=var2.item(),
        covariance_v1=cov1.item(),
        covariance_v2=cov2.item(),
        total=loss.item(),
    )
    return loss, breakdown
