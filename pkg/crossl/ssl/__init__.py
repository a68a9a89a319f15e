"""Latent masking and the variance-invariance-covariance objective."""

from crossl.ssl.loss import (
    LossBreakdown,
    covariance_term,
    invariance_term,
    total_loss,
    variance_term,
)
from crossl.ssl.masking import (
    MaskMatrix,
    apply_mask,
    forced_modality_mask,
    sample_masks,
)
