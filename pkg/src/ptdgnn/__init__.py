"""Time-aware self-supervised pre-training for dynamic graph neural networks."""
from .config import RunConfig
from .evaluate import EvalReport, ProtocolError, auc, average_precision, evaluate, f1_score
from .finetune import FinetuneConfig, finetune
from .graph import (
    GraphFormatError,
    InvalidSplitError,
    TemporalGraph,
    chronological_split,
    generate_synthetic,
    init_features,
    load_snap_edgelist,
)
from .masker import MaskConfig, MaskPlan, mask_subgraph
from .nn import EncoderConfig, NumericError, ParamStore
from .pretrain import PretrainConfig, pretrain
from .sampler import SamplerConfig, sample_subgraph

__version__ = "0.1.0"
