"""Run configuration: one JSON document drives a whole experiment."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .finetune import FinetuneConfig
from .graph import check_ratios
from .masker import MaskConfig
from .nn import EncoderConfig
from .pretrain import OptimizerConfig, PretrainConfig
from .sampler import SamplerConfig


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SyntheticSpec(_Strict):
    n: int = Field(1000, ge=10)
    m_per_node: int = Field(2, ge=1)
    horizon: Optional[int] = Field(None, ge=1)
    seed: int = 0


class DatasetSection(_Strict):
    path: Optional[str] = None
    directed: bool = True
    synthetic: Optional[SyntheticSpec] = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.path is None) == (self.synthetic is None):
            raise ValueError("dataset needs exactly one of 'path' or 'synthetic'")
        return self


class FeatureSection(_Strict):
    kind: Literal["seeded-gaussian", "degree-buckets", "file"] = "seeded-gaussian"
    attr_dim: int = Field(32, ge=1)
    seed: int = 0
    path: Optional[str] = None


class SplitSection(_Strict):
    ratios: tuple[float, float, float, float] = (0.7, 0.1, 0.1, 0.1)

    @field_validator("ratios")
    @classmethod
    def _valid(cls, v):
        return check_ratios(v)


class SamplerSection(_Strict):
    depth: int = Field(6, ge=1)
    width: int = Field(128, ge=1)
    kind: Literal["dyss", "layerwise-degree", "uniform"] = "dyss"


class MaskSection(_Strict):
    edge_mask_ratio: float = Field(0.5, ge=0.0, lt=1.0)
    prob_kind: Literal["softmax", "linear"] = "softmax"
    scheme: Literal["time-based", "random"] = "time-based"
    attr_mask_fraction: float = Field(1.0, gt=0.0, le=1.0)


class EncoderSection(_Strict):
    layers: int = Field(3, ge=1)
    hidden: int = Field(400, ge=1)
    base: Literal["gcn", "sgc"] = "gcn"
    activation: Literal["relu"] = "relu"


class OptimizerSection(_Strict):
    lr: float = Field(1e-3, gt=0)
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = Field(1e-8, gt=0)
    weight_decay: float = Field(0.01, ge=0)


class PretrainSection(_Strict):
    epochs: int = Field(20, ge=0)
    subgraphs_per_epoch: int = Field(8, ge=1)
    k_neg: Optional[int] = Field(None, ge=1)
    lambda_attr: float = Field(1.0, ge=0)
    pretrain_fraction: float = Field(1.0, gt=0, le=1.0)
    optimizer: OptimizerSection = OptimizerSection()


class FinetuneSection(_Strict):
    epochs: int = Field(20, ge=0)
    walk_len: int = Field(10, ge=2)
    walks_per_node: int = Field(5, ge=1)
    window: int = Field(2, ge=1)
    neg_per_pos: int = Field(2, ge=1)
    neg_power: float = 0.75
    batches_per_epoch: int = Field(8, ge=1)
    input_graph: Literal["train", "history"] = "train"
    optimizer: OptimizerSection = OptimizerSection()


class EvalSection(_Strict):
    threshold: float = Field(0.5, ge=0.0, le=1.0)


class RunConfig(_Strict):
    dataset: DatasetSection
    features: FeatureSection = FeatureSection()
    split: SplitSection = SplitSection()
    sampler: SamplerSection = SamplerSection()
    mask: MaskSection = MaskSection()
    encoder: EncoderSection = EncoderSection()
    pretrain: PretrainSection = PretrainSection()
    finetune: FinetuneSection = FinetuneSection()
    eval: EvalSection = EvalSection()
    output_dir: str = "runs/default"
    checkpoint: Optional[str] = None
    seed: int = 0
    repetitions: int = Field(1, ge=1)

    @classmethod
    def load(cls, path: str | Path) -> RunConfig:
        return cls.model_validate_json(Path(path).read_text(encoding="utf-8"))

    def config_hash(self) -> str:
        """Stable digest of the settings that affect results.

        Output location and checkpoint path are excluded; a checkpoint's own
        hash travels in its metadata.
        """
        doc = self.model_dump(mode="json", exclude={"output_dir", "checkpoint"})
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]

    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(**self.encoder.model_dump())

    def pretrain_config(self) -> PretrainConfig:
        p = self.pretrain
        return PretrainConfig(
            epochs=p.epochs,
            subgraphs_per_epoch=p.subgraphs_per_epoch,
            sampler=SamplerConfig(seed=self.seed, **self.sampler.model_dump()),
            mask=MaskConfig(seed=self.seed, **self.mask.model_dump()),
            encoder=self.encoder_config(),
            optimizer=_optimizer(p.optimizer),
            k_neg=p.k_neg,
            lambda_attr=p.lambda_attr,
            seed=self.seed,
        )

    def finetune_config(self, seed: int) -> FinetuneConfig:
        f = self.finetune.model_dump(exclude={"optimizer"})
        return FinetuneConfig(
            encoder=self.encoder_config(), optimizer=_optimizer(self.finetune.optimizer), seed=seed, **f
        )


def _optimizer(o: OptimizerSection) -> OptimizerConfig:
    return OptimizerConfig(lr=o.lr, betas=tuple(o.betas), eps=o.eps, weight_decay=o.weight_decay)


def derive_seed(master: int, index: int) -> int:
    digest = hashlib.sha256(f"{master}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1
