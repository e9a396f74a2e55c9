"""Experiment configuration records and the YAML config loader."""

import logging
from pathlib import Path
from typing import List, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import ConfigError
from .pcpg import BoundaryPolicy, PcpgKernel, check_lambda
from .reward import DiscountMode
from .vocab import VOCAB_SIZE

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class KernelConfig(_Strict):
    k: int = Field(default=5, ge=1, description="Window size (receptive field)")
    s: int = Field(default=1, ge=1, description="Stride between window centers")
    w: Union[Literal["uniform"], List[float]] = Field(
        default="uniform", description="Kernel weights, or 'uniform'"
    )
    padding: BoundaryPolicy = Field(
        default=BoundaryPolicy.ZERO_PAD, description="Boundary policy for out-of-range taps"
    )

    def to_kernel(self) -> PcpgKernel:
        try:
            return PcpgKernel.build(self.k, self.s, self.w)
        except ValueError as exc:
            raise ConfigError(f"invalid kernel: {exc}") from exc

    def label(self) -> str:
        weights = "uniform" if self.w == "uniform" else "_".join(f"{x:.3g}" for x in self.w)
        return f"k{self.k}-s{self.s}-w{weights}"


class ModelConfig(_Strict):
    vocab_size: int = Field(default=VOCAB_SIZE, ge=4, description="Output categories C")
    feature_dim: int = Field(default=48, ge=1, description="Input frame feature width F")
    frontend_dim: int = Field(default=32, ge=1, description="Linear frame embedding width")
    encoder_hidden: int = Field(default=32, ge=1, description="Per-direction encoder GRU size")
    decoder_hidden: int = Field(default=32, ge=1, description="Decoder GRU size")
    embed_dim: int = Field(default=16, ge=1, description="Output-token embedding width")
    attention_dim: int = Field(default=32, ge=1, description="Additive attention hidden size")
    num_layers: int = Field(default=2, ge=1, description="GRU layers in encoder and decoder")
    dropout: float = Field(default=0.5, ge=0.0, lt=1.0, description="Dropout before the output layer")


class TrainConfig(_Strict):
    lam: float = Field(default=0.5, alias="lambda", description="Weight of L_PCPG in L_combine")
    gamma: float = Field(default=0.99, ge=0.0, le=1.0, description="Return discount factor")
    discount_mode: DiscountMode = Field(default=DiscountMode.END_ANCHORED, description="Return formula")
    baseline: float = Field(default=0.0, description="Constant subtracted from every return")
    num_samples: int = Field(default=4, ge=1, description="Monte-Carlo episodes M per sample")
    kernel: KernelConfig = Field(default_factory=KernelConfig)
    lr: float = Field(default=0.001, gt=0.0, description="Learning rate")
    optimizer: Literal["adam", "sgd"] = Field(default="adam")
    batch_size: int = Field(default=16, ge=1)
    max_iters: int = Field(default=20000, ge=1, description="Optimizer updates")
    seed: int = Field(default=0, description="Root seed for init, episodes and dropout")
    ce_source: Literal["teacher-forced", "sampled"] = Field(
        default="teacher-forced", description="Sequences the CE term is computed on"
    )
    max_decode_len: int = Field(default=24, ge=1, description="Episode / decode length cap")
    temperature: float = Field(default=1.0, ge=0.0, description="Sampling temperature")
    eval_every: int = Field(default=200, ge=1)
    checkpoint_every: int = Field(default=1000, ge=1)
    patience: int = Field(default=10, ge=0, description="Evaluations without val CER gain; 0 = off")
    train_eval_samples: int = Field(default=64, ge=1, description="Train subset for train CER")
    val_eval_samples: Optional[int] = Field(default=None, ge=1, description="Val subset; None = all")

    @field_validator("lam")
    @classmethod
    def _lambda_range(cls, value: float) -> float:
        check_lambda(value)
        return value


class DataConfig(_Strict):
    task: Literal["copy", "reverse", "sentences", "words"] = Field(default="copy")
    dir: Path = Field(default=Path("data"), description="Directory holding dataset files")
    n_train: int = Field(default=2000, ge=1)
    n_val: int = Field(default=200, ge=1)
    n_test: int = Field(default=200, ge=1)
    len_min: int = Field(default=4, ge=1, le=20)
    len_max: int = Field(default=10, ge=1, le=20)
    feature_dim: int = Field(default=48, ge=VOCAB_SIZE, description="Frame width F")
    noise: float = Field(default=0.3, ge=0.0, description="Gaussian frame noise sigma")
    max_repeat: int = Field(default=3, ge=1, description="Frames per character drawn from 1..max")
    n_classes: int = Field(default=10, ge=2, le=40, description="Word classes (words task)")
    samples_per_class: int = Field(default=30, ge=1)

    def path(self, split: str) -> Path:
        return self.dir / f"{self.task}.{split}.txt"


class ProbeConfig(_Strict):
    checkpoint: Optional[Path] = Field(default=None, description="Pretrained model checkpoint")
    epochs: int = Field(default=30, ge=1)
    lr: float = Field(default=0.01, gt=0.0)
    batch_size: int = Field(default=16, ge=1)
    train_fraction: float = Field(default=0.8, gt=0.0, lt=1.0)
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2], min_length=1)


class SweepConfig(_Strict):
    presets: List[Literal["overlap-ablation", "kernel-size", "kernel-weights"]] = Field(default_factory=list)
    kernels: List[KernelConfig] = Field(default_factory=list)
    lambdas: List[float] = Field(default_factory=lambda: [0.5], min_length=1)
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4], min_length=1)
    workers: int = Field(default=1, ge=1)

    @field_validator("lambdas")
    @classmethod
    def _lambdas_range(cls, values: List[float]) -> List[float]:
        for value in values:
            check_lambda(value)
        return values


class ExperimentConfig(_Strict):
    schema_version: int = Field(description="Config schema version; must be 1")
    seed: int = Field(default=0, description="Root seed (data, init, episodes)")
    out_dir: Path = Field(default=Path("runs/latest"))
    data: DataConfig = Field(default_factory=DataConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    probe: ProbeConfig = Field(default_factory=ProbeConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)

    @field_validator("schema_version")
    @classmethod
    def _known_schema(cls, value: int) -> int:
        if value != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {value}; expected {SCHEMA_VERSION}")
        return value


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Read and validate a YAML experiment config."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    try:
        config = ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    logger.debug("Loaded config %s", path)
    return config


def dump_config(config: ExperimentConfig) -> str:
    """YAML text that :func:`load_config` reads back to an equal config."""
    payload = config.model_dump(mode="json", by_alias=True)
    return yaml.safe_dump(payload, sort_keys=False)
