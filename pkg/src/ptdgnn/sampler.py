"""Time-aware subgraph sampling (DySS) and a degree-based layer-wise baseline."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .graph import CSR, TemporalGraph

SAMPLER_KINDS = ("dyss", "layerwise-degree", "uniform")


@dataclass(frozen=True)
class SamplerConfig:
    depth: int = 6
    width: int = 128
    kind: str = "dyss"
    seed: int = 0

    def __post_init__(self):
        if self.depth < 1 or self.width < 1:
            raise ValueError("depth and width must be >= 1")
        if self.kind not in SAMPLER_KINDS:
            raise ValueError(f"unknown sampler kind {self.kind!r}")


@dataclass(frozen=True, eq=False)
class SampledSubgraph:
    global_ids: np.ndarray  # local index -> global node id
    src: np.ndarray  # local endpoints
    dst: np.ndarray
    t: np.ndarray  # t_norm of each local edge
    edge_ids: np.ndarray  # global edge index of each local edge
    attrs: np.ndarray | None = None

    @property
    def num_nodes(self) -> int:
        return int(self.global_ids.size)

    @property
    def num_edges(self) -> int:
        return int(self.src.size)

    def degree(self) -> np.ndarray:
        return np.bincount(self.src, minlength=self.num_nodes) + np.bincount(self.dst, minlength=self.num_nodes)

    def write_edgelist(self, path: str | Path) -> None:
        """Debug dump: ``# local global`` mapping lines, then ``src dst t`` local edges."""
        with open(path, "w", encoding="utf-8") as fh:
            for i, gid in enumerate(self.global_ids):
                fh.write(f"# {i} {gid}\n")
            for e in np.lexsort((self.dst, self.src, self.t)):
                fh.write(f"{self.src[e]} {self.dst[e]} {self.t[e]!r}\n")


def selection_probabilities(scores: np.ndarray) -> np.ndarray:
    """Squared-score normalisation; uniform when every score is zero."""
    sq = np.square(np.asarray(scores, dtype=np.float64))
    total = sq.sum()
    if total == 0:
        return np.full(sq.size, 1.0 / sq.size)
    return sq / total


def weighted_order(weights: np.ndarray, rng: np.random.Generator, k: int) -> np.ndarray:
    """Indices of ``k`` draws without replacement, in draw order.

    Equivalent to repeated single draws with probability proportional to
    ``weights`` after removing previous picks (Efraimidis-Spirakis keys).
    Zero-weight items come after all positive ones, in uniform random order.
    """
    weights = np.asarray(weights, dtype=np.float64)
    n = weights.size
    k = min(k, n)
    u = rng.random(n)
    tie = rng.random(n)
    with np.errstate(divide="ignore"):
        keys = np.where(weights > 0, np.log(u) / np.where(weights > 0, weights, 1.0), -np.inf)
    order = np.lexsort((tie, -keys))
    return order[:k]


def empirical_selection_frequencies(weights, trials: int, seed: int = 0) -> np.ndarray:
    """Frequencies of single draws under the squared-score rule over ``trials`` runs.

    All-zero weights fall back to uniform selection.
    """
    w = np.square(np.asarray(weights, dtype=np.float64))
    if w.size == 0 or np.any(w < 0):
        raise ValueError("need at least one nonnegative weight")
    if not np.any(w > 0):
        w = np.ones_like(w)
    rng = np.random.default_rng(seed)
    u = rng.random((trials, w.size))
    with np.errstate(divide="ignore"):
        keys = np.where(w > 0, np.log(u) / np.where(w > 0, w, 1.0), -np.inf)
    picks = keys.argmax(axis=1)
    return np.bincount(picks, minlength=w.size) / trials


def _start_nodes(csr: CSR, width: int, rng: np.random.Generator) -> np.ndarray:
    active = np.flatnonzero(csr.degree() > 0)
    if active.size <= width:
        return active
    return np.sort(rng.choice(active, size=width, replace=False))


def _expand(csr: CSR, frontier: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Concatenated (neighbour, t) of every adjacency entry of the frontier nodes."""
    starts = csr.indptr[frontier]
    lens = csr.indptr[frontier + 1] - starts
    total = int(lens.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64), np.empty(0)
    offsets = np.repeat(starts - np.cumsum(lens) + lens, lens) + np.arange(total)
    return csr.nbr[offsets], csr.t[offsets]


def _layered_sample(csr: CSR, n: int, cfg: SamplerConfig, rng: np.random.Generator) -> np.ndarray:
    frontier = _start_nodes(csr, cfg.width, rng)
    in_sub = np.zeros(n, dtype=bool)
    in_sub[frontier] = True
    ps = np.zeros(n)
    in_pool = np.zeros(n, dtype=bool)
    degree = csr.degree().astype(np.float64)
    picked = [frontier]
    for _ in range(cfg.depth):
        nbr, t = _expand(csr, frontier)
        if cfg.kind == "dyss":
            # every frontier node re-contributes each round, so PS keeps growing
            np.add.at(ps, nbr, t)
        in_pool[nbr] = True
        in_pool[in_sub] = False
        pool = np.flatnonzero(in_pool)
        if pool.size == 0:
            break
        if cfg.kind == "dyss":
            weights = np.square(ps[pool])
        elif cfg.kind == "layerwise-degree":
            weights = np.square(degree[pool])
        else:
            weights = np.ones(pool.size)
        if not np.any(weights > 0):
            weights = np.ones(pool.size)
        chosen = pool[weighted_order(weights, rng, cfg.width)]
        in_sub[chosen] = True
        in_pool[chosen] = False
        picked.append(chosen)
        frontier = np.concatenate([frontier, chosen])
    return np.concatenate(picked)


def induced_subgraph(
    g: TemporalGraph, edge_block: np.ndarray, nodes: np.ndarray, times: np.ndarray | None = None
) -> SampledSubgraph:
    times = g.t_norm if times is None else times
    edge_block = np.asarray(edge_block, dtype=np.int64)
    local = np.full(g.num_nodes, -1, dtype=np.int64)
    local[nodes] = np.arange(nodes.size)
    s, d = g.src[edge_block], g.dst[edge_block]
    keep = (local[s] >= 0) & (local[d] >= 0)
    eids = edge_block[keep]
    order = np.argsort(eids, kind="stable")
    eids = eids[order]
    attrs = None if g.attrs is None else g.attrs[nodes]
    return SampledSubgraph(nodes, local[g.src[eids]], local[g.dst[eids]], times[eids], eids, attrs)


def sample_subgraph(
    g: TemporalGraph,
    edge_block: np.ndarray,
    cfg: SamplerConfig,
    rng: np.random.Generator | None = None,
    csr: CSR | None = None,
    times: np.ndarray | None = None,
) -> SampledSubgraph:
    """Grow a subgraph from ``cfg.width`` random start nodes over ``cfg.depth`` rounds.

    Only edges in ``edge_block`` are visible. ``times`` overrides the per-edge
    normalised timestamps (see ``TemporalGraph.block_times``); ``csr`` may be
    passed to reuse a prebuilt block adjacency built with the same times.
    """
    edge_block = np.asarray(edge_block, dtype=np.int64)
    if edge_block.size == 0:
        raise ValueError("edge block is empty")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    csr = g.block_csr(edge_block, times) if csr is None else csr
    nodes = _layered_sample(csr, g.num_nodes, cfg, rng)
    return induced_subgraph(g, edge_block, nodes, times)


def dyss_sample(g, edge_block, cfg: SamplerConfig, rng=None, csr=None, times=None) -> SampledSubgraph:
    if cfg.kind != "dyss":
        raise ValueError("dyss_sample needs cfg.kind == 'dyss'")
    return sample_subgraph(g, edge_block, cfg, rng, csr, times)


def layerwise_degree_sample(g, edge_block, cfg: SamplerConfig, rng=None, csr=None, times=None) -> SampledSubgraph:
    if cfg.kind != "layerwise-degree":
        raise ValueError("layerwise_degree_sample needs cfg.kind == 'layerwise-degree'")
    return sample_subgraph(g, edge_block, cfg, rng, csr, times)
