"""Run configuration management using pydantic and pydantic-settings."""

import json
from pathlib import Path
from typing import Any, Iterator, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from crossl.core.errors import ConfigError


class Section(BaseModel):
    """Base for config sections: unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True, frozen=True)


class ModalityConfig(Section):
    """One sensor stream."""

    name: str = Field(..., min_length=1, description="Unique modality name")
    channels: int = Field(..., gt=0, description="Channel count C_m")
    window_len: int = Field(..., gt=0, description="Samples per window T_m")
    sampling_rate: float = Field(default=1.0, gt=0, description="Sampling rate in Hz (metadata only)")


class ConvLayerSpec(Section):
    """One 1D convolution layer of a modality encoder."""

    out_channels: int = Field(..., gt=0, description="Output channels")
    kernel_width: int = Field(..., gt=0, description="Kernel width W")
    stride: int = Field(default=1, gt=0, description="Stride")


def _default_layers() -> List[ConvLayerSpec]:
    return [
        ConvLayerSpec(out_channels=16, kernel_width=5, stride=2),
        ConvLayerSpec(out_channels=32, kernel_width=5, stride=2),
        ConvLayerSpec(out_channels=64, kernel_width=3, stride=1),
    ]


class EncoderSpec(Section):
    """Modality-specific encoder: three conv layers, mean pooling, projection to K."""

    layers: List[ConvLayerSpec] = Field(
        default_factory=_default_layers,
        min_length=3,
        max_length=3,
        description="Exactly three conv layers {out_channels, kernel_width, stride}",
    )
    embedding_dim: int = Field(default=32, gt=0, description="Intermediate embedding size K")


class AggregatorSpec(Section):
    """Cross-modal aggregator: dense layers from M*K to D."""

    hidden: List[int] = Field(default_factory=lambda: [128], description="Hidden layer widths")
    output_dim: int = Field(default=64, gt=0, description="Global embedding size D")

    @model_validator(mode="after")
    def _check_hidden(self) -> "AggregatorSpec":
        if any(width <= 0 for width in self.hidden):
            raise ValueError("hidden widths must be positive")
        return self


class MaskSpec(Section):
    """Latent masking strategy used to build the two pre-training views."""

    strategy: Literal["random", "spatial"] = Field(
        default="spatial", description="Masking strategy: random (elementwise) or spatial (whole modality)"
    )
    rate: float = Field(default=0.5, ge=0.0, le=1.0, description="Random masking rate r")
    count: int = Field(default=1, ge=0, description="Spatial masking: modalities hidden per sample")

    def describe(self) -> str:
        """Short label such as ``random:0.5`` or ``spatial:1``."""
        if self.strategy == "random":
            return f"random:{self.rate:g}"
        return f"spatial:{self.count}"


class LossWeights(Section):
    """Weights of the variance-invariance-covariance objective."""

    lambda_inv: float = Field(default=10.0, ge=0.0, alias="lambda", description="Invariance weight")
    mu_var: float = Field(default=10.0, ge=0.0, alias="mu", description="Variance weight")
    nu_cov: float = Field(default=100.0, ge=0.0, alias="nu", description="Covariance weight")
    gamma: float = Field(default=1.0, gt=0.0, description="Target per-dimension standard deviation")
    eps_var: float = Field(default=1e-4, gt=0.0, alias="eps", description="Variance stability scalar")


def _default_modalities() -> List[ModalityConfig]:
    return [
        ModalityConfig(name="acc", channels=3, window_len=50, sampling_rate=50.0),
        ModalityConfig(name="gyro", channels=3, window_len=100, sampling_rate=100.0),
        ModalityConfig(name="hr", channels=1, window_len=25, sampling_rate=25.0),
    ]


class SyntheticConfig(Section):
    """Synthetic multimodal benchmark driven by a shared latent class."""

    num_classes: int = Field(default=4, ge=2, description="Number of classes")
    modalities: List[ModalityConfig] = Field(
        default_factory=_default_modalities,
        min_length=1,
        description="Modalities {name, channels, window_len, sampling_rate}",
    )
    samples_per_class: int = Field(default=100, ge=4, description="Windows generated per class")
    noise_std: float = Field(default=0.1, ge=0.0, description="Std of i.i.d. Gaussian noise")
    nuisance_std: float = Field(default=0.5, ge=0.0, description="Amplitude of the class-independent sinusoid")
    seed: int = Field(default=0, description="Generator seed")

    @model_validator(mode="after")
    def _unique_names(self) -> "SyntheticConfig":
        names = [m.name for m in self.modalities]
        if len(set(names)) != len(names):
            raise ValueError("modality names must be unique")
        return self


class TrainSection(Section):
    """Optimization schedule shared by pre-training and classifier training."""

    ssl_lr: float = Field(default=1e-4, gt=0.0, description="Pre-training learning rate")
    cls_lr: float = Field(default=1e-3, gt=0.0, description="Classifier / fine-tuning learning rate")
    ssl_epochs: int = Field(default=100, ge=0, description="Maximum pre-training epochs")
    cls_epochs: int = Field(default=50, ge=0, description="Maximum classifier epochs")
    freeze_epochs: int = Field(default=20, ge=0, description="Epochs with encoders and aggregator frozen when fine-tuning")
    patience: int = Field(default=5, ge=1, description="Epochs without progress before early stopping")
    batch_size: int = Field(default=32, ge=2, description="Batch size")
    beta1: float = Field(default=0.9, ge=0.0, lt=1.0, description="Adam beta1")
    beta2: float = Field(default=0.999, ge=0.0, lt=1.0, description="Adam beta2")
    eps_opt: float = Field(default=1e-8, gt=0.0, description="Adam epsilon")
    seed: int = Field(default=0, description="Seed for initialization, shuffling and masks")

    @model_validator(mode="after")
    def _check_schedule(self) -> "TrainSection":
        if self.freeze_epochs > self.cls_epochs:
            raise ValueError("freeze_epochs must not exceed cls_epochs")
        return self


class TrainConfig(TrainSection):
    """Full training configuration: schedule plus masking and loss."""

    masking: MaskSpec = Field(default_factory=MaskSpec, description="Masking strategy")
    loss: LossWeights = Field(default_factory=LossWeights, description="Loss weights")


class EvalSection(Section):
    """Experiment matrix settings."""

    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4], min_length=1, description="Seeds per condition")
    grid: List[float] = Field(
        default_factory=lambda: [0.0, 0.25, 0.5, 0.75],
        min_length=1,
        description="Masking sweep grid (rates for random, counts for spatial)",
    )
    fractions: List[float] = Field(
        default_factory=lambda: [0.01, 0.05, 0.1, 0.2, 0.5, 1.0],
        min_length=1,
        description="Label fractions for the label-efficiency sweep",
    )
    missing_count: int = Field(default=1, ge=1, description="Modalities removed per sample in missing scenarios")
    jobs: int = Field(default=1, ge=1, description="Parallel experiment cells")


class RunConfig(Section):
    """Complete configuration document for one CLI run."""

    synthetic: SyntheticConfig = Field(default_factory=SyntheticConfig, description="Synthetic data")
    encoder: EncoderSpec = Field(default_factory=EncoderSpec, description="Encoder architecture")
    aggregator: AggregatorSpec = Field(default_factory=AggregatorSpec, description="Aggregator architecture")
    masking: MaskSpec = Field(default_factory=MaskSpec, description="Masking strategy")
    loss: LossWeights = Field(default_factory=LossWeights, description="Loss weights")
    train: TrainSection = Field(default_factory=TrainSection, description="Training schedule")
    eval: EvalSection = Field(default_factory=EvalSection, description="Experiment matrix")
    data: Optional[str] = Field(default=None, description="Dataset manifest path (overridden by --data)")
    out: Optional[str] = Field(default=None, description="Output directory (overridden by --out)")

    def train_config(self) -> TrainConfig:
        """
        Merge the training schedule with the masking and loss sections.

        Returns:
            TrainConfig used by the training functions
        """
        return TrainConfig(**self.train.model_dump(), masking=self.masking, loss=self.loss)

    def to_json(self) -> str:
        """Serialize with JSON key names (aliases), stable key order."""
        return json.dumps(self.model_dump(mode="json", by_alias=True), indent=2, sort_keys=True) + "\n"


class Settings(BaseSettings):
    """Environment overrides. Only the seed may come from the environment."""

    model_config = SettingsConfigDict(
        env_prefix="CROSSL_",
        case_sensitive=False,
        extra="ignore",
    )

    seed: Optional[int] = Field(
        default=None,
        description="Overrides train.seed for quick experimentation",
    )


def _format_validation_error(error: ValidationError) -> str:
    first = error.errors()[0]
    location = ".".join(str(part) for part in first["loc"]) or "<root>"
    return f"{location}: {first['msg']}"


def parse_run_config(document: dict[str, Any]) -> RunConfig:
    """
    Validate a configuration document.

    Args:
        document: Parsed JSON object

    Returns:
        Validated RunConfig

    Raises:
        ConfigError: If a key is unknown or a value is invalid; the message
            names the dotted field path
    """
    try:
        return RunConfig.model_validate(document)
    except ValidationError as e:
        raise ConfigError(_format_validation_error(e)) from e


def load_run_config(path: Optional[str | Path], settings: Optional[Settings] = None) -> RunConfig:
    """
    Load a RunConfig from a JSON file and apply the environment seed override.

    Args:
        path: Config file path; None yields all defaults
        settings: Environment settings (read from the process environment if None)

    Returns:
        Resolved RunConfig

    Raises:
        ConfigError: If the document is not valid JSON or fails validation
        OSError: If the file cannot be read
    """
    document: dict[str, Any] = {}
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        try:
            document = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON: {e}") from e
        if not isinstance(document, dict):
            raise ConfigError(f"{path}: top level must be an object")

    config = parse_run_config(document)

    settings = settings or Settings()
    if settings.seed is not None:
        train = config.train.model_copy(update={"seed": settings.seed})
        config = config.model_copy(update={"train": train})
    return config


def config_keys(model: type[BaseModel] = RunConfig, prefix: str = "") -> Iterator[tuple[str, Any, str]]:
    """
    Enumerate every configuration key.

    Args:
        model: Section class to walk
        prefix: Dotted prefix of the section

    Yields:
        (dotted key, JSON-compatible default, description)
    """
    for name, info in model.model_fields.items():
        key = f"{prefix}{info.alias or name}"
        annotation = info.annotation
        if isinstance(annotation, type) and issubclass(annotation, BaseModel):
            yield from config_keys(annotation, prefix=f"{key}.")
            continue
        default = info.get_default(call_default_factory=True)
        if isinstance(default, list):
            default = [
                item.model_dump(mode="json", by_alias=True) if isinstance(item, BaseModel) else item
                for item in default
            ]
        yield key, default, info.description or ""
