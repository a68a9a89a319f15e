"""Modality encoders, cross-modal aggregator and linear classifier."""

from typing import Sequence

import numpy as np

from crossl.core.config import AggregatorSpec, EncoderSpec, ModalityConfig
from crossl.core.errors import ConfigError, ShapeError
from crossl.data.dataset import MultimodalBatch
from crossl.kernel import (
    Parameter,
    Rng,
    Tensor,
    as_tensor,
    conv1d,
    dense,
    flatten,
    global_mean_pool,
    relu,
    softmax,
    stack,
)

GROUPS = ("encoders", "aggregator", "classifier")


def min_window_len(encoder: EncoderSpec) -> int:
    """Shortest window the three valid-padding conv layers accept."""
    length = 1
    for layer in reversed(encoder.layers):
        length = (length - 1) * layer.stride + layer.kernel_width
    return length


def parameter_shapes(
    modalities: Sequence[ModalityConfig],
    encoder: EncoderSpec,
    aggregator: AggregatorSpec,
    num_classes: int,
) -> dict[str, tuple[int, ...]]:
    """
    Name and shape of every parameter, in canonical order.

    Encoder parameters are keyed by modality name so that reordering
    modalities keeps each encoder attached to its data.
    """
    shapes: dict[str, tuple[int, ...]] = {}
    for modality in modalities:
        prefix = f"encoder.{modality.name}"
        in_channels = modality.channels
        for index, layer in enumerate(encoder.layers, start=1):
            shapes[f"{prefix}.conv{index}.kernel"] = (layer.kernel_width, in_channels, layer.out_channels)
            shapes[f"{prefix}.conv{index}.bias"] = (layer.out_channels,)
            in_channels = layer.out_channels
        shapes[f"{prefix}.proj.weight"] = (in_channels, encoder.embedding_dim)
        shapes[f"{prefix}.proj.bias"] = (encoder.embedding_dim,)

    width = len(modalities) * encoder.embedding_dim
    for index, hidden in enumerate([*aggregator.hidden, aggregator.output_dim], start=1):
        shapes[f"aggregator.dense{index}.weight"] = (width, hidden)
        shapes[f"aggregator.dense{index}.bias"] = (hidden,)
        width = hidden

    shapes["classifier.weight"] = (aggregator.output_dim, num_classes)
    shapes["classifier.bias"] = (num_classes,)
    return shapes


def _group_of(name: str) -> str:
    if name.startswith("encoder."):
        return "encoders"
    if name.startswith("aggregator."):
        return "aggregator"
    return "classifier"


class ModelState:
    """
    Parameters of the M encoders, the aggregator and the classifier, plus the
    specs they were built from.

    Forward passes only read the state; optimizer steps and ``restore``
    mutate it.
    """

    def __init__(
        self,
        modalities: Sequence[ModalityConfig],
        encoder: EncoderSpec,
        aggregator: AggregatorSpec,
        num_classes: int,
        params: dict[str, Parameter],
    ):
        expected = parameter_shapes(modalities, encoder, aggregator, num_classes)
        if list(expected) != list(params):
            raise ShapeError("parameter names do not match the model specs")
        for name, shape in expected.items():
            if params[name].shape != shape:
                raise ShapeError(f"{name}: expected shape {shape}, got {params[name].shape}")

        self.modalities = list(modalities)
        self.encoder = encoder
        self.aggregator = aggregator
        self.num_classes = num_classes
        self.params = params

    @property
    def num_modalities(self) -> int:
        return len(self.modalities)

    @property
    def embedding_dim(self) -> int:
        return self.encoder.embedding_dim

    @property
    def global_dim(self) -> int:
        return self.aggregator.output_dim

    def parameters(self, *groups: str) -> list[Parameter]:
        """
        Parameters in canonical order, optionally restricted to groups.

        Args:
            groups: Any of "encoders", "aggregator", "classifier"; none means all
        """
        for group in groups:
            if group not in GROUPS:
                raise ConfigError(f"unknown parameter group {group!r}")
        return [p for name, p in self.params.items() if not groups or _group_of(name) in groups]

    def set_trainable(self, trainable: bool, *groups: str) -> None:
        for param in self.parameters(*groups):
            param.trainable = trainable

    def snapshot(self) -> dict[str, np.ndarray]:
        """Copy of every parameter value."""
        return {name: p.value.copy() for name, p in self.params.items()}

    def restore(self, snapshot: dict[str, np.ndarray]) -> None:
        for name, value in snapshot.items():
            self.params[name].value = value.copy()
            self.params[name].zero_grad()

    def copy(self) -> "ModelState":
        """Independent state with copied values and trainable flags."""
        params = {
            name: Parameter(p.value, name=name, trainable=p.trainable) for name, p in self.params.items()
        }
        return ModelState(self.modalities, self.encoder, self.aggregator, self.num_classes, params)

    def spec_document(self) -> dict:
        """JSON-compatible description of the architecture and trainable flags."""
        return {
            "modalities": [m.model_dump(mode="json") for m in self.modalities],
            "encoder": self.encoder.model_dump(mode="json"),
            "aggregator": self.aggregator.model_dump(mode="json"),
            "num_classes": self.num_classes,
            "trainable": {name: p.trainable for name, p in self.params.items()},
        }


def init_model(
    modalities: Sequence[ModalityConfig],
    encoder: EncoderSpec,
    aggregator: AggregatorSpec,
    num_classes: int,
    rng: Rng,
) -> ModelState:
    """
    Build a freshly initialized model.

    Weights are truncated-normal scaled by 1/sqrt(fan_in), each drawn from its
    own named stream; biases start at zero.

    Args:
        modalities: Modality configs, in aggregator input order
        encoder: Encoder architecture
        aggregator: Aggregator architecture
        num_classes: Classifier output width
        rng: Initialization stream

    Returns:
        New ModelState

    Raises:
        ConfigError: If modality names repeat or a window is shorter than the
            encoder's receptive field
    """
    names = [m.name for m in modalities]
    if not names:
        raise ConfigError("at least one modality is required")
    if len(set(names)) != len(names):
        raise ConfigError(f"modality names must be unique, got {names}")
    receptive = min_window_len(encoder)
    for modality in modalities:
        if modality.window_len < receptive:
            raise ConfigError(
                f"modalities.{modality.name}.window_len={modality.window_len} is shorter than "
                f"the encoder receptive field {receptive}"
            )
    if num_classes < 1:
        raise ConfigError("num_classes must be positive")

    params: dict[str, Parameter] = {}
    for name, shape in parameter_shapes(modalities, encoder, aggregator, num_classes).items():
        if name.endswith(".bias"):
            value = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[:-1]))
            value = rng.child(name).truncated_normal(shape, 1.0 / np.sqrt(fan_in))
        params[name] = Parameter(value, name=name)
    return ModelState(modalities, encoder, aggregator, num_classes, params)


def encode(x: Tensor | np.ndarray, modality_index: int, state: ModelState) -> Tensor:
    """
    Intermediate embedding Q^m of one modality.

    Args:
        x: Windows [N, T_m, C_m]
        modality_index: Position of the modality in the model
        state: Model parameters

    Returns:
        Q^m [N, K]

    Raises:
        ShapeError: If the index is out of range or the window shape does not
            match the modality config
    """
    if not 0 <= modality_index < state.num_modalities:
        raise ShapeError(f"modality index {modality_index} out of range for {state.num_modalities} modalities")
    modality = state.modalities[modality_index]
    x = as_tensor(x)
    if x.value.ndim != 3 or x.shape[1:] != (modality.window_len, modality.channels):
        raise ShapeError(
            f"{modality.name}: expected windows [N, {modality.window_len}, {modality.channels}], got {x.shape}"
        )

    prefix = f"encoder.{modality.name}"
    p = state.params
    hidden = x
    for index, layer in enumerate(state.encoder.layers, start=1):
        hidden = relu(
            conv1d(hidden, p[f"{prefix}.conv{index}.kernel"], p[f"{prefix}.conv{index}.bias"], layer.stride)
        )
    pooled = global_mean_pool(hidden)
    return dense(pooled, p[f"{prefix}.proj.weight"], p[f"{prefix}.proj.bias"])


def encode_all(batch: MultimodalBatch, state: ModelState) -> Tensor:
    """
    Stack every modality's embedding into Q [N, M, K].

    Unavailable modalities may be passed as None and are zero-filled; masking
    them out is the caller's job (see ``forced_modality_mask``).

    Args:
        batch: One [N, T_m, C_m] window array (or None) per modality, in model
            order, plus availability flags [N, M]
        state: Model parameters

    Returns:
        Q [N, M, K]

    Raises:
        ShapeError: If the modality count differs from the model, or a
            modality has no tensor while flagged available
    """
    windows = batch.windows
    if len(windows) != state.num_modalities:
        raise ShapeError(f"expected {state.num_modalities} modalities, got {len(windows)}")
    available = np.asarray(batch.available, dtype=bool)
    n = next((w.shape[0] for w in windows if w is not None), available.shape[0])
    if available.shape != (n, state.num_modalities):
        raise ShapeError(f"availability shape {available.shape} does not match ({n}, {state.num_modalities})")

    embeddings = []
    for index, (modality, window) in enumerate(zip(state.modalities, windows)):
        if window is None:
            if available[:, index].any():
                raise ShapeError(f"{modality.name}: no window tensor but flagged available")
            window = np.zeros((n, modality.window_len, modality.channels))
        embeddings.append(encode(window, index, state))
    return stack(embeddings)


def aggregate(masked_q: Tensor, state: ModelState) -> Tensor:
    """
    Global embedding Z from (masked) intermediate embeddings.

    The same weights serve both pre-training views.

    Args:
        masked_q: Q [N, M, K], already masked
        state: Model parameters

    Returns:
        Z [N, D]
    """
    expected = (state.num_modalities, state.embedding_dim)
    if masked_q.value.ndim != 3 or masked_q.shape[1:] != expected:
        raise ShapeError(f"aggregator expects [N, {expected[0]}, {expected[1]}], got {masked_q.shape}")

    p = state.params
    hidden = flatten(masked_q)
    depth = len(state.aggregator.hidden) + 1
    for index in range(1, depth + 1):
        hidden = dense(hidden, p[f"aggregator.dense{index}.weight"], p[f"aggregator.dense{index}.bias"])
        if index < depth:
            hidden = relu(hidden)
    return hidden


def classifier_logits(z: Tensor, state: ModelState) -> Tensor:
    """Pre-softmax class scores [N, num_classes]."""
    if z.value.ndim != 2 or z.shape[1] != state.global_dim:
        raise ShapeError(f"classifier expects [N, {state.global_dim}], got {z.shape}")
    return dense(z, state.params["classifier.weight"], state.params["classifier.bias"])


def classify(z: Tensor, state: ModelState) -> Tensor:
    """
    Class probabilities; rows sum to one and argmax is the prediction.

    Args:
        z: Global embeddings [N, D]
        state: Model parameters

    Returns:
        Probabilities [N, num_classes] (constant tensor)
    """
    return Tensor(softmax(classifier_logits(z, state).value))
