"""Pre-training by masked edge generation (contrastive) and attribute generation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .graph import TemporalGraph
from .masker import MaskConfig, MaskPlan, mask_subgraph
from .nn import (
    DualEmbedding,
    EncoderConfig,
    NumericError,
    ParamStore,
    adamw_step,
    decode_attrs,
    decode_backward,
    encode,
    encode_backward,
)
from .sampler import SampledSubgraph, SamplerConfig, sample_subgraph

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizerConfig:
    lr: float = 1e-3
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01


@dataclass(frozen=True)
class PretrainConfig:
    epochs: int = 20
    subgraphs_per_epoch: int = 8
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    mask: MaskConfig = field(default_factory=MaskConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    k_neg: int | None = None  # None: as many negatives as the anchor has positives
    lambda_attr: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0 or self.subgraphs_per_epoch < 1:
            raise ValueError("epochs must be >= 0 and subgraphs_per_epoch >= 1")
        if self.k_neg is not None and self.k_neg < 1:
            raise ValueError("k_neg must be >= 1")
        if self.lambda_attr < 0:
            raise ValueError("lambda_attr must be >= 0")


@dataclass(eq=False)
class EdgeLossBatch:
    anchors: np.ndarray
    positives: list[np.ndarray]
    negatives: list[np.ndarray]


def neighbor_matrix(sg: SampledSubgraph) -> sp.csr_matrix:
    n = sg.num_nodes
    rows = np.concatenate([sg.src, sg.dst])
    cols = np.concatenate([sg.dst, sg.src])
    return sp.csr_matrix((np.ones(rows.size, dtype=bool), (rows, cols)), shape=(n, n))


def sample_negatives(sg: SampledSubgraph, anchor: int, k_neg: int, rng: np.random.Generator, adj=None) -> np.ndarray:
    """Uniform draw without replacement from nodes not adjacent to ``anchor``.

    Adjacency counts every subgraph edge, masked or observed.
    """
    adj = neighbor_matrix(sg) if adj is None else adj
    eligible = np.ones(sg.num_nodes, dtype=bool)
    eligible[adj.indices[adj.indptr[anchor] : adj.indptr[anchor + 1]]] = False
    eligible[anchor] = False
    pool = np.flatnonzero(eligible)
    if pool.size <= k_neg:
        return pool
    return np.sort(rng.choice(pool, size=k_neg, replace=False))


def build_edge_batch(sg: SampledSubgraph, plan: MaskPlan, k_neg: int | None, rng: np.random.Generator) -> EdgeLossBatch:
    """Each masked edge (u, v) makes v a positive of u and u a positive of v."""
    m = plan.masked_edges
    if m.size == 0:
        return EdgeLossBatch(np.empty(0, dtype=np.int64), [], [])
    a = np.concatenate([sg.src[m], sg.dst[m]])
    b = np.concatenate([sg.dst[m], sg.src[m]])
    pairs = np.unique(np.stack([a, b], axis=1), axis=0)
    anchors, starts = np.unique(pairs[:, 0], return_index=True)
    positives = np.split(pairs[:, 1], starts[1:])
    adj = neighbor_matrix(sg)
    negatives = [
        sample_negatives(sg, int(i), len(p) if k_neg is None else k_neg, rng, adj)
        for i, p in zip(anchors, positives)
    ]
    return EdgeLossBatch(anchors, positives, negatives)


def edge_loss(batch: EdgeLossBatch, r: np.ndarray, with_grad: bool = False):
    """Multi-positive contrastive loss with dot-product similarity.

    For anchor i with positives P and negatives S the contribution is
    ``sum_{p in P} [logsumexp_{j in P+S}(r_i.r_j) - r_i.r_p]``.
    Returns the loss, or ``(loss, dL/dr)`` when ``with_grad``.
    """
    d_r = np.zeros_like(r) if with_grad else None
    groups = [(i, p, s) for i, p, s in zip(batch.anchors, batch.positives, batch.negatives) if len(p)]
    if not groups:
        return (0.0, d_r) if with_grad else 0.0
    sizes = np.array([len(p) + len(s) for _, p, s in groups])
    n_pos = np.array([len(p) for _, p, _ in groups], dtype=np.float64)
    anchor = np.repeat([i for i, _, _ in groups], sizes)
    cand = np.concatenate([np.concatenate([p, s]) for _, p, s in groups]).astype(np.int64)
    is_pos = np.concatenate([np.r_[np.ones(len(p)), np.zeros(len(s))] for _, p, s in groups])
    starts = np.r_[0, np.cumsum(sizes)[:-1]]
    logits = np.einsum("ij,ij->i", r[anchor], r[cand])
    if not np.all(np.isfinite(logits)):
        raise NumericError("non-finite similarity in edge loss")
    mx = np.maximum.reduceat(logits, starts)
    ex = np.exp(logits - np.repeat(mx, sizes))
    denom = np.add.reduceat(ex, starts)
    lse = mx + np.log(denom)
    loss = float(np.dot(n_pos, lse) - np.dot(is_pos, logits))
    if not with_grad:
        return loss
    soft = ex / np.repeat(denom, sizes)
    d_logit = np.repeat(n_pos, sizes) * soft - is_pos
    np.add.at(d_r, anchor, d_logit[:, None] * r[cand])
    np.add.at(d_r, cand, d_logit[:, None] * r[anchor])
    return loss, d_r


def attr_loss(
    sg: SampledSubgraph, plan: MaskPlan, dual: DualEmbedding, params: ParamStore, with_grad: bool = False, weight: float = 1.0
):
    """Summed squared L2 error between decoded ``r_a`` and the true attributes.

    With ``with_grad`` the gradients of ``weight * loss`` are accumulated into
    the decoder parameters and ``(loss, d(weight * loss)/dr_a)`` is returned.
    """
    nodes = plan.attr_masked_nodes
    if nodes.size == 0:
        return (0.0, np.zeros_like(dual.r_a)) if with_grad else 0.0
    pred, cache = decode_attrs(dual.r_a, params)
    diff = pred - sg.attrs[nodes]
    loss = float(np.sum(diff * diff))
    if not with_grad:
        return loss
    return loss, decode_backward(cache, 2.0 * weight * diff, params)


def pretrain_loss(sg, plan, batch, params: ParamStore, lambda_attr: float) -> tuple[float, float]:
    """Forward + backward of ``L_E + lambda * L_A``; gradients land in ``params``."""
    dual = encode(sg, plan, params)
    le, d_re = edge_loss(batch, dual.r_e, with_grad=True)
    if lambda_attr > 0:
        la, d_ra = attr_loss(sg, plan, dual, params, with_grad=True, weight=lambda_attr)
    else:
        la, d_ra = attr_loss(sg, plan, dual, params), None
    encode_backward(dual, d_re, d_ra, params)
    return le, la


@dataclass(eq=False)
class PretrainResult:
    params: ParamStore
    trace: list[tuple[int, float, float, float]]  # (step, L_E, L_A, total)


def step_rng(seed: int, step: int) -> np.random.Generator:
    return np.random.default_rng([seed, step])


def pretrain(
    g: TemporalGraph,
    pretrain_block: np.ndarray,
    cfg: PretrainConfig,
    params: ParamStore | None = None,
    on_epoch_end: Callable[[int, ParamStore], None] | None = None,
) -> PretrainResult:
    if g.attrs is None:
        raise ValueError("graph has no node attributes; run init_features first")
    block = np.asarray(pretrain_block, dtype=np.int64)
    if block.size == 0:
        raise ValueError("pretraining block is empty")
    params = ParamStore.init(cfg.encoder, g.attr_dim, cfg.seed) if params is None else params
    # times renormalised inside the block so later edges cannot shift them
    times = g.block_times(block)
    csr = g.block_csr(block, times)
    opt = cfg.optimizer
    trace = []
    step = 0
    for epoch in range(cfg.epochs):
        for _ in range(cfg.subgraphs_per_epoch):
            rng = step_rng(cfg.seed, step)
            sg = sample_subgraph(g, block, cfg.sampler, rng, csr, times)
            if sg.num_edges == 0:
                log.warning("step %d: sampled subgraph has no edges, skipped", step)
                step += 1
                continue
            plan = mask_subgraph(sg, cfg.mask, rng)
            batch = build_edge_batch(sg, plan, cfg.k_neg, rng)
            try:
                le, la = pretrain_loss(sg, plan, batch, params, cfg.lambda_attr)
                adamw_step(params, opt.lr, opt.betas, opt.eps, opt.weight_decay)
            except NumericError as exc:
                raise NumericError(f"step {step}: {exc}") from exc
            trace.append((step, le, la, le + cfg.lambda_attr * la))
            step += 1
        if on_epoch_end is not None:
            on_epoch_end(epoch, params)
    return PretrainResult(params, trace)
