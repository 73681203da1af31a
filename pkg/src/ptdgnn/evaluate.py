"""Link-prediction pairs, scoring and AUC / AP / F1."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from .graph import SplitBlocks, TemporalGraph
from .nn import ParamStore, embed, normalized_adjacency


class ProtocolError(RuntimeError):
    pass


def _unordered(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.stack([np.minimum(u, v), np.maximum(u, v)], axis=1)


def build_pairs(g: TemporalGraph, blocks: SplitBlocks, target: int = 3, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Positive and negative node pairs for ``blocks[target]``.

    Positives are the de-duplicated (unordered) pairs of the target block.
    Negatives are an equal number of distinct uniform pairs that never occur in
    blocks ``0..target`` and whose endpoints both touch the pretrain or train
    block. Later blocks are never read, so validation pairs do not depend on
    the test block.
    """
    block = np.asarray(blocks[target])
    if block.size == 0:
        raise ValueError("target block is empty")
    pos = np.unique(_unordered(g.src[block], g.dst[block]), axis=0)
    seen_ids = np.concatenate([blocks[0], blocks[1]])
    seen = np.unique(np.concatenate([g.src[seen_ids], g.dst[seen_ids]]))
    known = np.concatenate([np.asarray(b) for b in blocks[: target + 1]])
    n = g.num_nodes
    key = lambda p: p[:, 0].astype(np.int64) * n + p[:, 1]  # noqa: E731
    forbidden = set(key(_unordered(g.src[known], g.dst[known])).tolist())
    rng = np.random.default_rng(seed)
    need = pos.shape[0]
    if seen.size < 2:
        raise ProtocolError("fewer than two nodes seen before the target block")
    chosen: list[tuple[int, int]] = []
    taken: set[int] = set()
    attempts = 0
    limit = 100 * need
    while len(chosen) < need:
        batch = max(need - len(chosen), 16)
        a = seen[rng.integers(0, seen.size, batch)]
        b = seen[rng.integers(0, seen.size, batch)]
        for u, v in zip(a.tolist(), b.tolist()):
            attempts += 1
            if attempts > limit:
                raise ProtocolError(f"could not find {need} negative pairs within {limit} draws")
            if u == v:
                continue
            if u > v:
                u, v = v, u
            k = u * n + v
            if k in forbidden or k in taken:
                continue
            taken.add(k)
            chosen.append((u, v))
            if len(chosen) == need:
                break
    return pos, np.array(chosen, dtype=np.int64).reshape(-1, 2)


def build_test_pairs(g: TemporalGraph, blocks: SplitBlocks, seed: int = 0):
    return build_pairs(g, blocks, target=3, seed=seed)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def embeddings(params: ParamStore, g: TemporalGraph, edge_ids: np.ndarray) -> np.ndarray:
    edge_ids = np.asarray(edge_ids, dtype=np.int64)
    prop = normalized_adjacency(g.num_nodes, g.src[edge_ids], g.dst[edge_ids])
    return embed(g.attrs, prop, params).r_e


def score_pairs(params: ParamStore, g: TemporalGraph, edge_ids: np.ndarray, pairs: np.ndarray, r=None) -> np.ndarray:
    """``sigmoid(r_i . r_j)`` with embeddings computed over ``edge_ids`` only."""
    r = embeddings(params, g, edge_ids) if r is None else r
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    return sigmoid(np.einsum("ij,ij->i", r[pairs[:, 0]], r[pairs[:, 1]]))


def _check(pos, neg):
    pos = np.asarray(pos, dtype=np.float64).ravel()
    neg = np.asarray(neg, dtype=np.float64).ravel()
    if pos.size == 0 or neg.size == 0:
        raise ValueError("need at least one positive and one negative score")
    return pos, neg


def auc(pos_scores, neg_scores) -> float:
    """Mann-Whitney form: ties between a positive and a negative count one half."""
    pos, neg = _check(pos_scores, neg_scores)
    ranks = rankdata(np.concatenate([pos, neg]))
    u = ranks[: pos.size].sum() - pos.size * (pos.size + 1) / 2.0
    return float(u / (pos.size * neg.size))


def auc_pairwise(pos_scores, neg_scores) -> float:
    pos, neg = _check(pos_scores, neg_scores)
    diff = pos[:, None] - neg[None, :]
    wins = (diff > 0).sum() + 0.5 * (diff == 0).sum()
    return float(wins / (pos.size * neg.size))


def average_precision(pos_scores, neg_scores) -> float:
    """Step-interpolated area under the precision-recall curve.

    Ranked by descending score; within tied scores negatives are placed first.
    """
    pos, neg = _check(pos_scores, neg_scores)
    scores = np.concatenate([pos, neg])
    labels = np.concatenate([np.ones(pos.size), np.zeros(neg.size)])
    order = np.lexsort((labels, -scores))
    hits = labels[order]
    precision = np.cumsum(hits) / np.arange(1, hits.size + 1)
    return float(precision[hits == 1].sum() / pos.size)


def f1_score(pos_scores, neg_scores, threshold: float = 0.5) -> float:
    """F1 with a pair predicted as a link when its score exceeds ``threshold``."""
    pos, neg = _check(pos_scores, neg_scores)
    tp = float((pos > threshold).sum())
    fp = float((neg > threshold).sum())
    fn = pos.size - tp
    if tp == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)


@dataclass
class EvalReport:
    auc: float
    ap: float
    f1: float
    n_pos: int
    n_neg: int
    n_unseen: int = 0  # positive/negative endpoints with no edge in the scoring graph
    seed: int = 0
    config_hash: str = ""
    variant: str = ""

    FIELDS = ("variant", "auc", "ap", "f1", "n_pos", "n_neg", "n_unseen", "seed", "config_hash")

    def row(self) -> dict:
        d = asdict(self)
        return {k: d[k] for k in self.FIELDS}

    def to_json(self) -> str:
        return json.dumps(self.row(), sort_keys=True)


def reports_to_csv(reports: list[EvalReport]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=EvalReport.FIELDS, lineterminator="\n")
    w.writeheader()
    for r in reports:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.row().items()})
    return buf.getvalue()


def aggregate(reports: list[EvalReport]) -> dict:
    """Mean and sample standard deviation per metric (stddev is 0 for one run)."""
    out = {"runs": len(reports)}
    for k in ("auc", "ap", "f1"):
        vals = np.array([getattr(r, k) for r in reports])
        out[f"{k}_mean"] = float(vals.mean())
        out[f"{k}_stddev"] = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
        out[k] = f"{out[f'{k}_mean']:.4f}±{out[f'{k}_stddev']:.4f}"
    return out


def evaluate(
    params: ParamStore,
    g: TemporalGraph,
    blocks: SplitBlocks,
    target: int = 3,
    seed: int = 0,
    threshold: float = 0.5,
    pairs: tuple[np.ndarray, np.ndarray] | None = None,
) -> EvalReport:
    """Score ``blocks[target]`` using every edge of the earlier blocks as input."""
    pos, neg = build_pairs(g, blocks, target, seed) if pairs is None else pairs
    graph_edges = np.concatenate([np.asarray(b) for b in blocks[:target]])
    r = embeddings(params, g, graph_edges)
    deg = np.bincount(np.concatenate([g.src[graph_edges], g.dst[graph_edges]]), minlength=g.num_nodes)
    unseen = int((deg[np.concatenate([pos.ravel(), neg.ravel()])] == 0).sum())
    ps = score_pairs(params, g, graph_edges, pos, r)
    ns = score_pairs(params, g, graph_edges, neg, r)
    if not (np.all(np.isfinite(ps)) and np.all(np.isfinite(ns))):
        raise ArithmeticError("non-finite scores")
    return EvalReport(
        auc(ps, ns), average_precision(ps, ns), f1_score(ps, ns, threshold), len(pos), len(neg), unseen, seed
    )
