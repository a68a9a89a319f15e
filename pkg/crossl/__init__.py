"""Cross-modal self-supervised learning for multimodal time-series through latent masking."""

__version__ = "1.0.0"
