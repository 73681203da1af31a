"""Timestamped graph storage, SNAP loading, chronological splits and feature init."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np


class GraphFormatError(ValueError):
    """Raised for malformed edge-list input."""


class InvalidSplitError(ValueError):
    pass


class CSR(NamedTuple):
    """Union (out + in) neighbourhoods, sorted per node by (t_norm, neighbour)."""

    indptr: np.ndarray
    nbr: np.ndarray
    t: np.ndarray
    eid: np.ndarray

    def neighbors(self, v: int) -> np.ndarray:
        return self.nbr[self.indptr[v] : self.indptr[v + 1]]

    def degree(self) -> np.ndarray:
        return np.diff(self.indptr)


def build_csr(n: int, src: np.ndarray, dst: np.ndarray, t: np.ndarray, eid: np.ndarray) -> CSR:
    """Store every edge once per direction so each endpoint sees the other."""
    rows = np.concatenate([src, dst])
    cols = np.concatenate([dst, src])
    ts = np.concatenate([t, t])
    eids = np.concatenate([eid, eid])
    order = np.lexsort((cols, ts, rows))
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return CSR(indptr, cols[order], ts[order], eids[order])


def normalize_times(t_raw: np.ndarray) -> np.ndarray:
    t_raw = np.asarray(t_raw, dtype=np.float64)
    if t_raw.size == 0:
        return t_raw
    lo, hi = t_raw.min(), t_raw.max()
    if hi == lo:
        return np.zeros_like(t_raw)
    return (t_raw - lo) / (hi - lo)


@dataclass(frozen=True, eq=False)
class TemporalGraph:
    """Immutable timestamped graph.

    Edges are kept in input order. ``t_norm`` is the min-max normalised
    timestamp, so the earliest edge sits at 0 and the latest at 1.
    """

    num_nodes: int
    src: np.ndarray
    dst: np.ndarray
    t_raw: np.ndarray
    attrs: np.ndarray | None = None
    directed: bool = True
    labels: np.ndarray | None = None  # original node ids, default 0..n-1
    t_norm: np.ndarray = field(init=False)

    def __post_init__(self):
        src = np.ascontiguousarray(self.src, dtype=np.int64)
        dst = np.ascontiguousarray(self.dst, dtype=np.int64)
        t_raw = np.ascontiguousarray(self.t_raw, dtype=np.int64)
        if not (src.shape == dst.shape == t_raw.shape) or src.ndim != 1:
            raise ValueError("src, dst and t_raw must be 1-d arrays of equal length")
        if src.size and (min(src.min(), dst.min()) < 0 or max(src.max(), dst.max()) >= self.num_nodes):
            raise ValueError("node id out of range")
        for name, arr in (("src", src), ("dst", dst), ("t_raw", t_raw)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        labels = np.arange(self.num_nodes) if self.labels is None else np.array(self.labels, dtype=np.int64)
        if labels.shape != (self.num_nodes,):
            raise ValueError("labels must have one entry per node")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        t_norm = normalize_times(t_raw)
        t_norm.setflags(write=False)
        object.__setattr__(self, "t_norm", t_norm)
        if self.attrs is not None:
            attrs = np.array(self.attrs, dtype=np.float64)
            if attrs.ndim != 2 or attrs.shape[0] != self.num_nodes:
                raise ValueError(f"attrs must have {self.num_nodes} rows, got shape {attrs.shape}")
            attrs.setflags(write=False)
            object.__setattr__(self, "attrs", attrs)

    @property
    def num_edges(self) -> int:
        return int(self.src.size)

    @property
    def attr_dim(self) -> int:
        return 0 if self.attrs is None else int(self.attrs.shape[1])

    @property
    def adjacency(self) -> CSR:
        csr = self.__dict__.get("_csr")
        if csr is None:
            csr = self.block_csr(np.arange(self.num_edges))
            object.__setattr__(self, "_csr", csr)
        return csr

    def block_csr(self, edge_ids: np.ndarray, times: np.ndarray | None = None) -> CSR:
        edge_ids = np.asarray(edge_ids, dtype=np.int64)
        times = self.t_norm if times is None else times
        return build_csr(self.num_nodes, self.src[edge_ids], self.dst[edge_ids], times[edge_ids], edge_ids)

    def block_times(self, edge_ids: np.ndarray) -> np.ndarray:
        """Per-edge times min-max normalised over ``edge_ids`` only (NaN elsewhere).

        Lets a stage see normalised times that do not depend on later edges.
        """
        edge_ids = np.asarray(edge_ids, dtype=np.int64)
        out = np.full(self.num_edges, np.nan)
        out[edge_ids] = normalize_times(self.t_raw[edge_ids])
        return out

    def with_attrs(self, attrs: np.ndarray) -> TemporalGraph:
        return TemporalGraph(self.num_nodes, self.src, self.dst, self.t_raw, attrs, self.directed, self.labels)

    def restrict(self, edge_ids: np.ndarray) -> TemporalGraph:
        """Same node set and attributes, only the given edges (t_norm is recomputed)."""
        edge_ids = np.sort(np.asarray(edge_ids, dtype=np.int64))
        return TemporalGraph(
            self.num_nodes,
            self.src[edge_ids],
            self.dst[edge_ids],
            self.t_raw[edge_ids],
            self.attrs,
            self.directed,
            self.labels,
        )

    def same_as(self, other: TemporalGraph) -> bool:
        if self.num_nodes != other.num_nodes or self.directed != other.directed:
            return False
        if (self.attrs is None) != (other.attrs is None):
            return False
        pairs = ((self.src, other.src), (self.dst, other.dst), (self.t_raw, other.t_raw), (self.labels, other.labels))
        same = all(np.array_equal(a, b) for a, b in pairs)
        return same and (self.attrs is None or np.array_equal(self.attrs, other.attrs))


def load_snap_edgelist(path: str | Path, directed: bool = True) -> TemporalGraph:
    """Read a ``SRC DST UNIXTIME`` edge list.

    Node ids are compacted to ``0..n-1`` in order of first appearance. Self
    loops are dropped (their endpoints are not registered); duplicate
    interactions are kept.
    """
    ids: dict[int, int] = {}
    src: list[int] = []
    dst: list[int] = []
    ts: list[int] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) < 3:
                raise GraphFormatError(f"{path}:{lineno}: expected 'SRC DST TIME', got {line!r}")
            try:
                u, v, t = int(parts[0]), int(parts[1]), int(parts[2])
            except ValueError:
                raise GraphFormatError(f"{path}:{lineno}: non-integer field in {line!r}") from None
            if u == v:
                continue
            src.append(ids.setdefault(u, len(ids)))
            dst.append(ids.setdefault(v, len(ids)))
            ts.append(t)
    if not src:
        raise GraphFormatError(f"{path}: no edges")
    labels = np.fromiter(ids.keys(), dtype=np.int64, count=len(ids))
    return TemporalGraph(len(ids), np.array(src), np.array(dst), np.array(ts), directed=directed, labels=labels)


def canonical_order(g: TemporalGraph) -> np.ndarray:
    return np.lexsort((g.labels[g.dst], g.labels[g.src], g.t_raw))


def write_snap_edgelist(g: TemporalGraph, path: str | Path) -> None:
    """Canonical export: one ``src dst t`` line per edge using the original node
    labels, sorted by (t, src, dst)."""
    order = canonical_order(g)
    src, dst = g.labels[g.src[order]], g.labels[g.dst[order]]
    with open(path, "w", encoding="utf-8") as fh:
        fh.writelines(f"{u} {v} {t}\n" for u, v, t in zip(src.tolist(), dst.tolist(), g.t_raw[order].tolist()))


class SplitBlocks(NamedTuple):
    pretrain: np.ndarray
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray


def check_ratios(ratios: Sequence[float]) -> tuple[float, float, float, float]:
    if len(ratios) != 4:
        raise InvalidSplitError("need four ratios (pretrain, train, validation, test)")
    if any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise InvalidSplitError(f"ratios must be nonnegative and sum to 1, got {tuple(ratios)}")
    return tuple(float(r) for r in ratios)


def chronological_split(g: TemporalGraph, ratios: Sequence[float] = (0.7, 0.1, 0.1, 0.1)) -> SplitBlocks:
    """Sort edges by (t_raw, input position) and cut into four contiguous blocks."""
    ratios = check_ratios(ratios)
    m = g.num_edges
    order = np.argsort(g.t_raw, kind="stable")
    sizes = [int(round(r * m)) for r in ratios[:3]]
    sizes.append(m - sum(sizes))
    names = SplitBlocks._fields
    for name, r, s in zip(names, ratios, sizes):
        if s < 0 or (r > 0 and s == 0):
            raise InvalidSplitError(f"{name} block is empty ({m} edges, ratios {ratios})")
    bounds = np.cumsum([0] + sizes)
    return SplitBlocks(*(order[bounds[k] : bounds[k + 1]] for k in range(4)))


FEATURE_KINDS = ("seeded-gaussian", "degree-buckets", "file")


def init_features(
    g: TemporalGraph,
    kind: str = "seeded-gaussian",
    attr_dim: int = 32,
    seed: int = 0,
    path: str | Path | None = None,
    edge_ids: np.ndarray | None = None,
) -> np.ndarray:
    """Node attribute matrix of shape ``(num_nodes, attr_dim)``.

    ``degree-buckets`` one-hot encodes ``floor(log2(deg)) + 1`` (0 for isolated
    nodes), clipped to the last column; degrees are counted over ``edge_ids``
    when given, else over all edges.
    """
    if attr_dim < 1:
        raise ValueError("attr_dim must be >= 1")
    n = g.num_nodes
    if kind == "seeded-gaussian":
        rng = np.random.default_rng(seed)
        return rng.standard_normal((n, attr_dim)) / math.sqrt(attr_dim)
    if kind == "degree-buckets":
        ids = np.arange(g.num_edges) if edge_ids is None else np.asarray(edge_ids)
        deg = np.bincount(g.src[ids], minlength=n) + np.bincount(g.dst[ids], minlength=n)
        bucket = np.zeros(n, dtype=np.int64)
        nz = deg > 0
        bucket[nz] = np.floor(np.log2(deg[nz])).astype(np.int64) + 1
        out = np.zeros((n, attr_dim))
        out[np.arange(n), np.minimum(bucket, attr_dim - 1)] = 1.0
        return out
    if kind == "file":
        if path is None:
            raise ValueError("file features need a path")
        x = np.load(path) if str(path).endswith(".npy") else np.loadtxt(path, ndmin=2)
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] != n:
            raise ValueError(f"feature file has shape {x.shape}, expected {n} rows")
        return x
    raise ValueError(f"unknown feature kind {kind!r}")


def generate_synthetic(n: int, m_per_node: int = 2, horizon: int | None = None, seed: int = 0) -> TemporalGraph:
    """Time-ordered preferential attachment.

    Node ``k`` arrives at step ``k`` and links to ``min(k, m_per_node)`` distinct
    earlier nodes drawn with probability proportional to ``degree + 1``. All
    edges created at step ``k`` share the raw timestamp ``k * step`` where
    ``step = max(1, horizon // (n - 1))``; ``horizon`` therefore approximates
    the total time span (default ``n - 1``).
    """
    if n < 10 or m_per_node < 1:
        raise ValueError("need n >= 10 and m_per_node >= 1")
    horizon = n - 1 if horizon is None else horizon
    step = max(1, horizon // (n - 1))
    rng = np.random.default_rng(seed)
    deg = np.zeros(n)
    src, dst, ts = [], [], []
    for k in range(1, n):
        weights = deg[:k] + 1.0
        picks = rng.choice(k, size=min(k, m_per_node), replace=False, p=weights / weights.sum())
        for u in picks:
            src.append(k)
            dst.append(int(u))
            ts.append(k * step)
            deg[u] += 1
        deg[k] += len(picks)
    return TemporalGraph(n, np.array(src), np.array(dst), np.array(ts), directed=False)
