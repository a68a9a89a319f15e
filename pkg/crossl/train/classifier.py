"""Classifier training: linear probe, fine-tuning and the supervised baseline."""

import time
from typing import Literal, Optional

import numpy as np

from crossl.core.config import AggregatorSpec, EncoderSpec, TrainConfig
from crossl.core.errors import ConfigError, DivergenceError, LabelError
from crossl.core.log import logger
from crossl.data import MultimodalBatch, MultimodalDataset, make_batches
from crossl.eval.metrics import macro_f1
from crossl.kernel import AdamState, Tensor, adam_step, backward, softmax_cross_entropy
from crossl.model import ModelState, classifier_logits
from crossl.train.common import EVAL_BATCH_SIZE, embed, embed_split, epoch_seed, new_model
from crossl.train.trace import EarlyStopping, EpochRecord, TrainTrace

FinetuneMode = Literal["finetuned", "fixed"]

BACKBONE = ("encoders", "aggregator")

# batch order is shared by probe, fine-tuning and the supervised baseline
SHUFFLE_STAGE = "classifier"


def predict(state: ModelState, dataset: MultimodalDataset, split: str) -> tuple[np.ndarray, Optional[np.ndarray]]:
    """
    Predicted class of every window in a split.

    No stochastic masking; unavailable modalities are masked.

    Returns:
        (predictions, true labels or None for an unlabelled dataset)
    """
    indices = dataset.indices(split)
    predictions = [
        classifier_logits(embed(batch, state), state).value.argmax(axis=1)
        for batch in make_batches(dataset, split, EVAL_BATCH_SIZE)
    ]
    labels = None if dataset.labels is None else dataset.labels[indices]
    return np.concatenate(predictions) if predictions else np.zeros(0, dtype=np.int64), labels


class _FrozenFeatures:
    """Z of every train/val window, valid while the backbone is frozen."""

    def __init__(self, state: ModelState, dataset: MultimodalDataset):
        self.values = np.zeros((dataset.size, state.global_dim))
        for split in ("train", "val"):
            indices, values = embed_split(state, dataset, split)
            self.values[indices] = values

    def __call__(self, batch: MultimodalBatch) -> Tensor:
        return Tensor(self.values[batch.indices])


def _validation_f1(state: ModelState, dataset: MultimodalDataset, features: Optional[_FrozenFeatures]) -> float:
    indices = dataset.indices("val")
    if features is None:
        predictions, labels = predict(state, dataset, "val")
    else:
        logits = classifier_logits(Tensor(features.values[indices]), state)
        predictions, labels = logits.value.argmax(axis=1), dataset.labels[indices]  # type: ignore[index]
    assert labels is not None
    return macro_f1(predictions, labels, dataset.num_classes)[0]


def _fit_classifier(
    state: ModelState,
    dataset: MultimodalDataset,
    config: TrainConfig,
    stage: str,
    frozen_epochs: int,
) -> tuple[ModelState, TrainTrace]:
    """
    Cross-entropy training loop shared by every classifier stage.

    The backbone is frozen for epochs [0, frozen_epochs). Every stage shuffles
    with the same per-epoch seeds. ``state`` is modified in place.
    """
    if dataset.labels is None:
        raise LabelError(f"{stage} needs labels on the train split")
    if not len(dataset.indices("train", labeled_only=True)):
        raise LabelError(f"{stage}: train split has no labelled windows")
    if not len(dataset.indices("val")):
        raise ConfigError(f"{stage} needs a validation split for early stopping")

    optimizer = AdamState(lr=config.cls_lr, beta1=config.beta1, beta2=config.beta2, eps_opt=config.eps_opt)
    params = state.parameters()
    trace = TrainTrace(stage=stage, metric="val_macro_f1")
    features: Optional[_FrozenFeatures] = None

    def freeze(frozen: bool) -> None:
        nonlocal features
        state.set_trainable(not frozen, *BACKBONE)
        features = _FrozenFeatures(state, dataset) if frozen else None

    freeze(frozen_epochs > 0)
    if config.cls_epochs == 0:
        return state, trace

    trace.initial_metric = _validation_f1(state, dataset, features)
    stopper = EarlyStopping(config.patience, "max")
    best = state.snapshot()

    for epoch in range(config.cls_epochs):
        if epoch == frozen_epochs and features is not None:
            freeze(False)
            logger.info("Backbone unfrozen", extra={"stage": stage, "epoch": epoch})

        started = time.perf_counter()
        seed = epoch_seed(config.seed, SHUFFLE_STAGE, epoch)
        batches = make_batches(dataset, "train", config.batch_size, seed, "supervised")
        weighted_loss = 0.0
        for index, batch in enumerate(batches):
            z = features(batch) if features is not None else embed(batch, state)
            loss = softmax_cross_entropy(classifier_logits(z, state), batch.labels)  # type: ignore[arg-type]
            value = loss.item()
            if not np.isfinite(value):
                raise DivergenceError(epoch, index, value)
            backward(loss)
            adam_step(params, optimizer)
            weighted_loss += value * batch.size

        train_loss = weighted_loss / sum(batch.size for batch in batches)
        val_f1 = _validation_f1(state, dataset, features)
        if stopper.update(epoch, val_f1):
            best = state.snapshot()
        trace.records.append(EpochRecord(epoch, train_loss, val_f1, seconds=time.perf_counter() - started))
        logger.info(
            "Classifier epoch",
            extra={"stage": stage, "epoch": epoch, "train_loss": f"{train_loss:.5f}", "val_f1": f"{val_f1:.4f}"},
        )
        if stopper.should_stop:
            trace.stop_reason = "early_stop"
            break

    state.restore(best)
    trace.best_epoch = stopper.best_epoch
    return state, trace


def finetune(
    dataset: MultimodalDataset,
    pretrained: ModelState,
    config: TrainConfig,
    mode: FinetuneMode = "finetuned",
) -> tuple[ModelState, TrainTrace]:
    """
    Train the classifier on top of a pre-trained backbone.

    ``fixed`` keeps encoders and aggregator frozen throughout (linear probe).
    ``finetuned`` freezes them for the first ``freeze_epochs`` epochs and
    trains everything afterwards. With ``freeze_epochs >= cls_epochs`` it is
    the same run as ``fixed``. Either way the forward pass masks only
    unavailable modalities, and the best validation macro-F1 state is
    returned.

    Args:
        dataset: Dataset with labels on (part of) the train split
        pretrained: Pre-trained model (not modified)
        config: Schedule
        mode: "finetuned" or "fixed"

    Returns:
        (trained copy, trace)

    Raises:
        LabelError: If labels are missing
        ConfigError: If the mode is unknown
    """
    if mode == "fixed":
        frozen_epochs = config.cls_epochs
    elif mode == "finetuned":
        frozen_epochs = config.freeze_epochs
    else:
        raise ConfigError(f"unknown fine-tuning mode {mode!r}; expected 'finetuned' or 'fixed'")
    return _fit_classifier(pretrained.copy(), dataset, config, f"finetune-{mode}", frozen_epochs)


def train_supervised(
    dataset: MultimodalDataset,
    config: TrainConfig,
    encoder: Optional[EncoderSpec] = None,
    aggregator: Optional[AggregatorSpec] = None,
) -> tuple[ModelState, TrainTrace]:
    """
    Supervised baseline: the same architecture trained end to end with
    cross-entropy from random initialization, without masking.

    Args:
        dataset: Labelled dataset
        config: Schedule (cls_lr, cls_epochs, patience, batch_size, seed)
        encoder: Encoder architecture (defaults if None)
        aggregator: Aggregator architecture (defaults if None)

    Returns:
        (trained model, trace)
    """
    state = new_model(dataset, encoder or EncoderSpec(), aggregator or AggregatorSpec(), config.seed)
    return _fit_classifier(state, dataset, config, "supervised", frozen_epochs=0)
