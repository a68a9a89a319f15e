"""Self-supervised pre-training with two masked views."""

import time

import numpy as np

from crossl.core.config import TrainConfig
from crossl.core.errors import ConfigError, DivergenceError
from crossl.core.log import logger
from crossl.data import MultimodalBatch, MultimodalDataset, make_batches
from crossl.kernel import AdamState, Rng, Tensor, adam_step, backward
from crossl.model import ModelState, aggregate, encode_all
from crossl.ssl import LossBreakdown, apply_mask, forced_modality_mask, sample_masks, total_loss
from crossl.train.common import epoch_seed
from crossl.train.trace import EarlyStopping, EpochRecord, TrainTrace

STAGE = "pretrain"


def ssl_loss(
    batch: MultimodalBatch,
    state: ModelState,
    config: TrainConfig,
    rng: Rng,
) -> tuple[Tensor, LossBreakdown]:
    """
    Objective of one batch.

    Both views share one encoding pass; each gets its own stochastic mask
    intersected with the mask of unavailable modalities, then goes through
    the shared aggregator.
    """
    q = encode_all(batch, state)
    n, m, k = q.shape
    forced = forced_modality_mask(batch.available, m, k)
    mask1, mask2 = sample_masks(config.masking, n, m, k, rng)
    z1 = aggregate(apply_mask(q, mask1 & forced), state)
    z2 = aggregate(apply_mask(q, mask2 & forced), state)
    return total_loss(z1, z2, config.loss)


def _validation_batches(dataset: MultimodalDataset, batch_size: int) -> list[MultimodalBatch]:
    batches = make_batches(dataset, "val", batch_size, mode="ssl")
    if not batches:
        # fewer validation windows than one batch: score them together
        indices = dataset.indices("val")
        if len(indices) < 2:
            raise ConfigError("pre-training needs at least two validation windows")
        batches = [dataset.batch(indices)]
    return batches


def _validation_loss(batches: list[MultimodalBatch], state: ModelState, config: TrainConfig, rng: Rng) -> float:
    totals = [ssl_loss(batch, state, config, rng)[1].total * batch.size for batch in batches]
    return float(sum(totals) / sum(batch.size for batch in batches))


def _mean_breakdown(parts: list[tuple[LossBreakdown, int]]) -> LossBreakdown:
    weights = np.array([size for _, size in parts], dtype=np.float64)

    def mean(name: str) -> float:
        return float(np.dot([getattr(b, name) for b, _ in parts], weights) / weights.sum())

    return LossBreakdown(
        invariance=mean("invariance"),
        variance_v1=mean("variance_v1"),
        variance_v2=mean("variance_v2"),
        covariance_v1=mean("covariance_v1"),
        covariance_v2=mean("covariance_v2"),
        total=mean("total"),
    )


def pretrain(dataset: MultimodalDataset, state: ModelState, config: TrainConfig) -> tuple[ModelState, TrainTrace]:
    """
    Pre-train encoders and aggregator without labels.

    Every batch: encode all modalities, draw two masks, aggregate each masked
    view and step Adam on the variance-invariance-covariance loss. Masks are
    redrawn for every batch and every validation pass. Training stops after
    ``patience`` epochs without validation progress; the best-validation
    parameters are returned.

    Args:
        dataset: Windows with train and val splits; labels are never read
        state: Initial model (not modified)
        config: Schedule, masking and loss weights

    Returns:
        (pre-trained copy of the model, trace)

    Raises:
        ConfigError: If the train split cannot fill one batch
        DivergenceError: If a batch loss is not finite
    """
    state = state.copy()
    trainable = state.parameters("encoders", "aggregator")
    root = Rng(config.seed, (STAGE,))
    mask_rng = root.child("masks")
    val_rng = root.child("val_masks")
    optimizer = AdamState(lr=config.ssl_lr, beta1=config.beta1, beta2=config.beta2, eps_opt=config.eps_opt)
    trace = TrainTrace(stage=STAGE, metric="val_loss")
    if config.ssl_epochs == 0:
        return state, trace

    if len(dataset.indices("train")) < config.batch_size:
        raise ConfigError(
            f"train split has {len(dataset.indices('train'))} windows, fewer than batch_size={config.batch_size}"
        )
    val_batches = _validation_batches(dataset, config.batch_size)
    trace.initial_metric = _validation_loss(val_batches, state, config, val_rng)
    stopper = EarlyStopping(config.patience, "min")
    best = state.snapshot()
    logger.info(
        "Pre-training started",
        extra={"epochs": config.ssl_epochs, "masking": config.masking.describe(), "seed": config.seed},
    )

    for epoch in range(config.ssl_epochs):
        started = time.perf_counter()
        batches = make_batches(dataset, "train", config.batch_size, epoch_seed(config.seed, STAGE, epoch), "ssl")
        parts: list[tuple[LossBreakdown, int]] = []
        for index, batch in enumerate(batches):
            loss, breakdown = ssl_loss(batch, state, config, mask_rng)
            if not np.isfinite(breakdown.total):
                raise DivergenceError(epoch, index, breakdown.total)
            backward(loss)
            adam_step(trainable, optimizer)
            parts.append((breakdown, batch.size))

        mean = _mean_breakdown(parts)
        val_loss = _validation_loss(val_batches, state, config, val_rng)
        if not np.isfinite(val_loss):
            raise DivergenceError(epoch, len(batches), val_loss)
        if stopper.update(epoch, val_loss):
            best = state.snapshot()
        trace.records.append(
            EpochRecord(epoch, mean.total, val_loss, breakdown=mean, seconds=time.perf_counter() - started)
        )
        logger.info(
            "Pre-training epoch",
            extra={"epoch": epoch, "train_loss": f"{mean.total:.5f}", "val_loss": f"{val_loss:.5f}"},
        )
        if stopper.should_stop:
            trace.stop_reason = "early_stop"
            break

    state.restore(best)
    trace.best_epoch = stopper.best_epoch
    logger.info(
        "Pre-training finished",
        extra={"epochs": len(trace), "best_epoch": trace.best_epoch, "stop": trace.stop_reason},
    )
    return state, trace
