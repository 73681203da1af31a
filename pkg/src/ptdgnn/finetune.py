"""Link-prediction fine-tuning on temporal random walks."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .evaluate import EvalReport, build_pairs, evaluate, sigmoid
from .graph import SplitBlocks, TemporalGraph
from .nn import EncoderConfig, NumericError, ParamStore, adamw_step, embed, encode_backward, normalized_adjacency
from .pretrain import OptimizerConfig

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FinetuneConfig:
    epochs: int = 20
    walk_len: int = 10
    walks_per_node: int = 5
    window: int = 2
    neg_per_pos: int = 2
    neg_power: float = 0.75
    batches_per_epoch: int = 8
    input_graph: str = "train"  # "train": train-block edges; "history": pretrain + train edges
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    seed: int = 0

    def __post_init__(self):
        if self.walk_len < 2 or self.window < 1 or self.neg_per_pos < 1:
            raise ValueError("need walk_len >= 2, window >= 1 and neg_per_pos >= 1")
        if self.epochs < 0 or self.walks_per_node < 1 or self.batches_per_epoch < 1:
            raise ValueError("epochs must be >= 0; walks_per_node and batches_per_epoch >= 1")
        if self.input_graph not in ("train", "history"):
            raise ValueError(f"unknown input_graph {self.input_graph!r}")


@dataclass(eq=False)
class WalkCorpus:
    walks: list[np.ndarray]
    times: list[np.ndarray]  # times[k][i] is the timestamp of the edge walks[k][i] -> walks[k][i+1]


def temporal_walks(
    g: TemporalGraph, train_block: np.ndarray, cfg: FinetuneConfig, rng: np.random.Generator
) -> WalkCorpus:
    """Walks whose successive edge timestamps never decrease.

    Each walk starts on a uniformly drawn block edge in a random direction and
    then repeatedly follows a uniformly chosen incident edge no older than the
    current time, stopping early when none exists. There are
    ``walks_per_node * |block nodes|`` walks; all of them have at least two nodes.
    """
    block = np.asarray(train_block, dtype=np.int64)
    if block.size == 0:
        raise ValueError("no start edges for temporal walks")
    times_all = g.block_times(block)
    csr = g.block_csr(block, times_all)
    # segment-local search: key = 2 * node + t with t in [0, 1]
    keys = 2.0 * np.repeat(np.arange(g.num_nodes), np.diff(csr.indptr)) + csr.t
    n_nodes = np.unique(np.concatenate([g.src[block], g.dst[block]])).size
    count = cfg.walks_per_node * n_nodes
    start = block[rng.integers(0, block.size, count)]
    flip = rng.random(count) < 0.5
    a = np.where(flip, g.dst[start], g.src[start])
    b = np.where(flip, g.src[start], g.dst[start])
    t = times_all[start]
    nodes = np.full((count, cfg.walk_len), -1, dtype=np.int64)
    times = np.full((count, cfg.walk_len - 1), np.nan)
    nodes[:, 0], nodes[:, 1], times[:, 0] = a, b, t
    lengths = np.full(count, 2)
    alive = np.ones(count, dtype=bool)
    cur, cur_t = b.copy(), t.copy()
    for step in range(2, cfg.walk_len):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        lo = np.searchsorted(keys, 2.0 * cur[idx] + cur_t[idx], side="left")
        hi = csr.indptr[cur[idx] + 1]
        ok = hi > lo
        alive[idx[~ok]] = False
        idx, lo, hi = idx[ok], lo[ok], hi[ok]
        pick = lo + (rng.random(idx.size) * (hi - lo)).astype(np.int64)
        cur[idx] = csr.nbr[pick]
        cur_t[idx] = csr.t[pick]
        nodes[idx, step] = cur[idx]
        times[idx, step - 1] = cur_t[idx]
        lengths[idx] = step + 1
    walks = [nodes[k, : lengths[k]] for k in range(count)]
    wtimes = [times[k, : lengths[k] - 1] for k in range(count)]
    return WalkCorpus(walks, wtimes)


def cooccurrence_pairs(corpus: WalkCorpus, window: int) -> np.ndarray:
    """Ordered (i, j) pairs within ``window`` steps on a walk, both directions, i != j."""
    out = []
    for w in corpus.walks:
        for off in range(1, window + 1):
            if off >= w.size:
                break
            out.append(np.stack([w[:-off], w[off:]], axis=1))
            out.append(np.stack([w[off:], w[:-off]], axis=1))
    if not out:
        return np.empty((0, 2), dtype=np.int64)
    pairs = np.concatenate(out)
    return pairs[pairs[:, 0] != pairs[:, 1]]


def negative_distribution(g: TemporalGraph, edge_ids: np.ndarray, power: float = 0.75) -> np.ndarray:
    """Noise distribution proportional to ``degree ** power`` over the given edges' nodes."""
    edge_ids = np.asarray(edge_ids, dtype=np.int64)
    deg = np.bincount(np.concatenate([g.src[edge_ids], g.dst[edge_ids]]), minlength=g.num_nodes).astype(np.float64)
    p = np.where(deg > 0, deg**power, 0.0)
    return p / p.sum()


def draw_negatives(p_n: np.ndarray, n_pairs: int, q: int, rng: np.random.Generator) -> np.ndarray:
    return rng.choice(p_n.size, size=(n_pairs, q), p=p_n)


def _log_sigmoid_neg(x):
    # -log(sigmoid(x))
    return np.logaddexp(0.0, -x)


def finetune_loss(pairs: np.ndarray, negatives: np.ndarray, r: np.ndarray, with_grad: bool = False):
    """Skip-gram negative-sampling loss.

    ``sum_(i,j) [-log s(r_i.r_j) - sum_q log s(-r_i.r_nq)]`` with ``s`` the
    logistic sigmoid and ``negatives[k]`` the Q noise nodes of pair ``k``.
    """
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    negatives = np.asarray(negatives, dtype=np.int64).reshape(pairs.shape[0], -1)
    i, j = pairs[:, 0], pairs[:, 1]
    pos = np.einsum("ij,ij->i", r[i], r[j])
    neg = np.einsum("kh,kqh->kq", r[i], r[negatives])
    if not (np.all(np.isfinite(pos)) and np.all(np.isfinite(neg))):
        raise NumericError("non-finite dot product in fine-tuning loss")
    loss = float(_log_sigmoid_neg(pos).sum() + _log_sigmoid_neg(-neg).sum())
    if not with_grad:
        return loss
    d_pos = sigmoid(pos) - 1.0
    d_neg = sigmoid(neg)
    d_r = np.zeros_like(r)
    np.add.at(d_r, i, d_pos[:, None] * r[j] + np.einsum("kq,kqh->kh", d_neg, r[negatives]))
    np.add.at(d_r, j, d_pos[:, None] * r[i])
    np.add.at(d_r, negatives.ravel(), (d_neg[:, :, None] * r[i][:, None, :]).reshape(-1, r.shape[1]))
    return loss, d_r


@dataclass(eq=False)
class FinetuneResult:
    params: ParamStore
    trace: list[tuple[int, float, EvalReport]]  # (epoch, train loss, validation report)
    best_epoch: int


def finetune(
    g: TemporalGraph,
    blocks: SplitBlocks,
    cfg: FinetuneConfig,
    pretrained: ParamStore | None = None,
    eval_threshold: float = 0.5,
) -> FinetuneResult:
    """Train on the train block and keep the parameters with the best validation AUC.

    Without ``pretrained`` the encoder starts fresh (the no-pre-training
    baseline). Only the encoder weights are updated.
    """
    if g.attrs is None:
        raise ValueError("graph has no node attributes")
    if pretrained is not None:
        if pretrained.encoder != cfg.encoder:
            raise ValueError(f"checkpoint encoder {pretrained.encoder} does not match configured {cfg.encoder}")
        params = pretrained.copy()
        for k in params.names():
            params.m[k][...] = 0.0
            params.v[k][...] = 0.0
        params.step = 0
    else:
        params = ParamStore.init(cfg.encoder, g.attr_dim, cfg.seed)
    train = np.asarray(blocks.train, dtype=np.int64)
    visible = train if cfg.input_graph == "train" else np.concatenate([blocks.pretrain, train])
    prop = normalized_adjacency(g.num_nodes, g.src[visible], g.dst[visible])
    p_n = negative_distribution(g, train, cfg.neg_power)
    val_pairs = build_pairs(g, blocks, target=2, seed=cfg.seed)
    names = params.encoder_names()
    opt = cfg.optimizer
    best = params.copy()
    best_auc, best_epoch = -1.0, -1
    trace = []
    for epoch in range(cfg.epochs):
        rng = np.random.default_rng([cfg.seed, epoch])
        corpus = temporal_walks(g, train, cfg, rng)
        pairs = cooccurrence_pairs(corpus, cfg.window)
        pairs = pairs[rng.permutation(pairs.shape[0])]
        epoch_loss = 0.0
        for batch in np.array_split(pairs, cfg.batches_per_epoch):
            if batch.shape[0] == 0:
                continue
            negs = draw_negatives(p_n, batch.shape[0], cfg.neg_per_pos, rng)
            emb = embed(g.attrs, prop, params, need_cache=True)
            loss, d_r = finetune_loss(batch, negs, emb.r_e, with_grad=True)
            encode_backward(emb, d_r, None, params)
            adamw_step(params, opt.lr, opt.betas, opt.eps, opt.weight_decay, names=names)
            params.zero_grad()
            epoch_loss += loss
        report = evaluate(params, g, blocks, target=2, seed=cfg.seed, threshold=eval_threshold, pairs=val_pairs)
        trace.append((epoch, epoch_loss, report))
        log.info("epoch %d loss %.4f val auc %.4f", epoch, epoch_loss, report.auc)
        if report.auc > best_auc:
            best_auc, best_epoch = report.auc, epoch
            best = params.copy()
    return FinetuneResult(best, trace, best_epoch)
