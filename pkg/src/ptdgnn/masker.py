"""Edge masking (time-based and random) and attribute-mask node selection."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .sampler import SampledSubgraph, weighted_order


@dataclass(frozen=True)
class MaskConfig:
    edge_mask_ratio: float = 0.5
    prob_kind: str = "softmax"
    scheme: str = "time-based"
    attr_mask_fraction: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.edge_mask_ratio < 1.0:
            raise ValueError("edge_mask_ratio must lie in [0, 1)")
        if not 0.0 < self.attr_mask_fraction <= 1.0:
            raise ValueError("attr_mask_fraction must lie in (0, 1]")
        if self.prob_kind not in ("softmax", "linear"):
            raise ValueError(f"unknown prob_kind {self.prob_kind!r}")
        if self.scheme not in ("time-based", "random"):
            raise ValueError(f"unknown mask scheme {self.scheme!r}")


@dataclass(frozen=True, eq=False)
class MaskPlan:
    masked_edges: np.ndarray
    observed_edges: np.ndarray
    attr_masked_nodes: np.ndarray

    def to_json(self) -> str:
        return json.dumps(
            {
                "masked_edges": self.masked_edges.tolist(),
                "observed_edges": self.observed_edges.tolist(),
                "attr_masked_nodes": self.attr_masked_nodes.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> MaskPlan:
        d = json.loads(text)
        return cls(*(np.asarray(d[k], dtype=np.int64) for k in ("masked_edges", "observed_edges", "attr_masked_nodes")))


def softmax(x: np.ndarray) -> np.ndarray:
    z = np.exp(x - x.max())
    return z / z.sum()


def mask_probabilities(t: np.ndarray, prob_kind: str = "softmax") -> np.ndarray:
    """Per-node mask distribution over incident edges: newer edges weigh more."""
    t = np.asarray(t, dtype=np.float64)
    if prob_kind == "softmax":
        return softmax(t)
    total = t.sum()
    if total == 0:
        return np.full(t.size, 1.0 / t.size)
    return t / total


def _incidence(sg: SampledSubgraph) -> tuple[np.ndarray, np.ndarray]:
    n = sg.num_nodes
    ends = np.concatenate([sg.src, sg.dst])
    eids = np.concatenate([np.arange(sg.num_edges)] * 2)
    order = np.argsort(ends, kind="stable")
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(ends, minlength=n), out=indptr[1:])
    return indptr, eids[order]


def _mask_edges(sg: SampledSubgraph, cfg: MaskConfig, rng: np.random.Generator, time_based: bool) -> np.ndarray:
    n, m = sg.num_nodes, sg.num_edges
    masked = np.zeros(m, dtype=bool)
    if m == 0:
        return masked
    indptr, inc = _incidence(sg)
    deg = np.diff(indptr)
    budget = np.minimum(np.floor(cfg.edge_mask_ratio * deg).astype(np.int64), np.maximum(deg - 1, 0))
    n_masked = np.zeros(n, dtype=np.int64)
    for v in range(n):
        # masks placed from the other endpoint count toward this node's budget
        need = int(budget[v] - n_masked[v])
        if deg[v] < 2 or need <= 0:
            continue
        edges = inc[indptr[v] : indptr[v + 1]]
        free = edges[~masked[edges]]
        if time_based:
            weights = mask_probabilities(sg.t[free], cfg.prob_kind)
        else:
            weights = np.ones(free.size)
        for e in free[weighted_order(weights, rng, free.size)]:
            other = sg.dst[e] if sg.src[e] == v else sg.src[e]
            # the other endpoint's budget binds too (degree-1 nodes have none to protect)
            if deg[other] >= 2 and n_masked[other] >= budget[other]:
                continue
            masked[e] = True
            n_masked[v] += 1
            n_masked[other] += 1
            need -= 1
            if need == 0:
                break
    return masked


def _plan(sg, masked: np.ndarray, attr_nodes: np.ndarray) -> MaskPlan:
    return MaskPlan(np.flatnonzero(masked), np.flatnonzero(~masked), attr_nodes)


def time_based_edge_mask(sg: SampledSubgraph, cfg: MaskConfig, rng=None) -> MaskPlan:
    """Mask ``floor(ratio * deg(v))`` incident edges per node (at most ``deg(v) - 1``),
    drawn by softmax (or linear) weights over their normalised timestamps.

    No node of degree >= 2 ends up with more masked edges than its own budget,
    so none of them is isolated.

    The attribute-masked set of the returned plan is drawn with the same rng.
    """
    if cfg.scheme != "time-based":
        raise ValueError("time_based_edge_mask needs scheme == 'time-based'")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    masked = _mask_edges(sg, cfg, rng, time_based=True)
    return _plan(sg, masked, select_attr_masked_nodes(sg, cfg, rng))


def random_edge_mask(sg: SampledSubgraph, cfg: MaskConfig, rng=None) -> MaskPlan:
    """Same per-node budget as the time-based mask, uniform over incident edges."""
    if cfg.scheme != "random":
        raise ValueError("random_edge_mask needs scheme == 'random'")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    masked = _mask_edges(sg, cfg, rng, time_based=False)
    return _plan(sg, masked, select_attr_masked_nodes(sg, cfg, rng))


def mask_subgraph(sg: SampledSubgraph, cfg: MaskConfig, rng=None) -> MaskPlan:
    if cfg.scheme == "time-based":
        return time_based_edge_mask(sg, cfg, rng)
    return random_edge_mask(sg, cfg, rng)


def select_attr_masked_nodes(sg: SampledSubgraph, cfg: MaskConfig, rng=None) -> np.ndarray:
    n = sg.num_nodes
    if cfg.attr_mask_fraction >= 1.0:
        return np.arange(n)
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    k = int(math.ceil(cfg.attr_mask_fraction * n))
    return np.sort(rng.choice(n, size=k, replace=False))
