"""Dense float64 encoder/decoder math with exact hand-derived gradients, plus AdamW.

The encoder keeps two node states. The edge stream (``r_e``) starts from the
real attributes and is the only state ever aggregated from neighbours. The
attribute stream (``r_a``) exists for attribute-masked nodes only: it starts
from the learnable placeholder ``x_prime`` and at each layer combines the
neighbours' *edge-stream* states with its own previous ``r_a`` through the
self-loop weight. ``r_a`` therefore never leaks into any other node.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

CHECKPOINT_VERSION = 1


class NumericError(ArithmeticError):
    pass


@dataclass(frozen=True)
class EncoderConfig:
    layers: int = 3
    hidden: int = 400
    base: str = "gcn"
    activation: str = "relu"

    def __post_init__(self):
        if self.layers < 1 or self.hidden < 1:
            raise ValueError("layers and hidden must be >= 1")
        if self.base not in ("gcn", "sgc"):
            raise ValueError(f"unknown base model {self.base!r}")
        if self.activation != "relu":
            raise ValueError("only relu activation is supported")


def _glorot(rng, fan_in, fan_out):
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class ParamStore:
    """Named float64 tensors with gradient and AdamW moment buffers."""

    def __init__(self, tensors: dict[str, np.ndarray], encoder: EncoderConfig, attr_dim: int):
        self.encoder = encoder
        self.attr_dim = attr_dim
        self.tensors = {k: np.array(v, dtype=np.float64) for k, v in tensors.items()}
        self.grads = {k: np.zeros_like(v) for k, v in self.tensors.items()}
        self.m = {k: np.zeros_like(v) for k, v in self.tensors.items()}
        self.v = {k: np.zeros_like(v) for k, v in self.tensors.items()}
        self.step = 0
        self._check_shapes()

    @classmethod
    def init(cls, encoder: EncoderConfig, attr_dim: int, seed: int = 0) -> ParamStore:
        rng = np.random.default_rng(seed)
        h = encoder.hidden
        t: dict[str, np.ndarray] = {}
        n_weights = encoder.layers if encoder.base == "gcn" else 1
        for l in range(1, n_weights + 1):
            fan_in = attr_dim if l == 1 else h
            t[f"enc.W{l}"] = _glorot(rng, fan_in, h)
            t[f"enc.b{l}"] = np.zeros(h)
        t["x_prime"] = 0.01 * rng.standard_normal(attr_dim)
        t["dec.W1"] = _glorot(rng, h, h)
        t["dec.b1"] = np.zeros(h)
        t["dec.W2"] = _glorot(rng, h, attr_dim)
        t["dec.b2"] = np.zeros(attr_dim)
        return cls(t, encoder, attr_dim)

    def expected_shapes(self) -> dict[str, tuple[int, ...]]:
        h, a = self.encoder.hidden, self.attr_dim
        shapes: dict[str, tuple[int, ...]] = {}
        n_weights = self.encoder.layers if self.encoder.base == "gcn" else 1
        for l in range(1, n_weights + 1):
            shapes[f"enc.W{l}"] = (a if l == 1 else h, h)
            shapes[f"enc.b{l}"] = (h,)
        shapes.update({"x_prime": (a,), "dec.W1": (h, h), "dec.b1": (h,), "dec.W2": (h, a), "dec.b2": (a,)})
        return shapes

    def _check_shapes(self):
        expected = self.expected_shapes()
        if set(expected) != set(self.tensors):
            raise ValueError(f"parameter names {sorted(self.tensors)} do not match config {sorted(expected)}")
        for k, shape in expected.items():
            if self.tensors[k].shape != shape:
                raise ValueError(f"{k}: shape {self.tensors[k].shape}, expected {shape}")

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    def names(self) -> list[str]:
        return list(self.tensors)

    def encoder_names(self) -> list[str]:
        return [k for k in self.tensors if k.startswith("enc.")]

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0.0)

    def copy(self) -> ParamStore:
        out = ParamStore(self.tensors, self.encoder, self.attr_dim)
        for k in self.tensors:
            out.m[k][...] = self.m[k]
            out.v[k][...] = self.v[k]
        out.step = self.step
        return out

    def save(self, path: str | Path, meta: dict | None = None) -> None:
        doc = {
            "version": CHECKPOINT_VERSION,
            "encoder_config": asdict(self.encoder),
            "attr_dim": self.attr_dim,
            "tensors": {k: {"shape": list(v.shape), "values": v.ravel().tolist()} for k, v in self.tensors.items()},
        }
        if meta:
            doc["meta"] = meta
        Path(path).write_text(json.dumps(doc), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, expect: EncoderConfig | None = None) -> ParamStore:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        if doc.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {doc.get('version')!r}")
        enc = EncoderConfig(**doc["encoder_config"])
        if expect is not None and enc != expect:
            raise ValueError(f"checkpoint encoder {enc} does not match configured {expect}")
        tensors = {}
        for k, spec in doc["tensors"].items():
            arr = np.asarray(spec["values"], dtype=np.float64)
            tensors[k] = arr.reshape(spec["shape"])
        return cls(tensors, enc, int(doc["attr_dim"]))


def sum_of_squares(params: ParamStore) -> float:
    """Scalar ``sum(p**2)`` over all tensors; accumulates its gradient."""
    total = 0.0
    for k, p in params.tensors.items():
        total += float(np.sum(p * p))
        params.grads[k] += 2.0 * p
    return total


def adamw_step(
    params: ParamStore,
    lr: float = 1e-3,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    weight_decay: float = 0.01,
    names: list[str] | None = None,
) -> None:
    """One AdamW update with decoupled weight decay, then zero the gradients."""
    names = params.names() if names is None else names
    for k in names:
        if not np.all(np.isfinite(params.grads[k])):
            raise NumericError(f"non-finite gradient in {k}")
    params.step += 1
    b1, b2 = betas
    t = params.step
    for k in names:
        p, g = params.tensors[k], params.grads[k]
        m, v = params.m[k], params.v[k]
        p *= 1.0 - lr * weight_decay
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)
    params.zero_grad()


@dataclass(frozen=True, eq=False)
class Propagation:
    """Symmetric-normalised adjacency with self loops, and its diagonal."""

    adj: sp.csr_matrix
    self_weight: np.ndarray


def normalized_adjacency(n: int, src: np.ndarray, dst: np.ndarray) -> Propagation:
    """``D^-1/2 (A + I) D^-1/2`` over the undirected, de-duplicated edge set."""
    src = np.asarray(src, dtype=np.int64)
    dst = np.asarray(dst, dtype=np.int64)
    keep = src != dst
    rows = np.concatenate([src[keep], dst[keep], np.arange(n)])
    cols = np.concatenate([dst[keep], src[keep], np.arange(n)])
    a = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n))
    a.data[:] = 1.0  # parallel edges collapse to one link
    deg = np.asarray(a.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(deg)
    adj = sp.csr_matrix(sp.diags(inv_sqrt) @ a @ sp.diags(inv_sqrt))
    adj.sort_indices()
    return Propagation(adj, inv_sqrt * inv_sqrt)


@dataclass(eq=False)
class DualEmbedding:
    r_e: np.ndarray
    r_a: np.ndarray  # rows follow attr_nodes
    attr_nodes: np.ndarray
    cache: list = field(default_factory=list, repr=False)
    prop: Propagation | None = None


def _check_finite(x: np.ndarray, layer: int):
    if not np.all(np.isfinite(x)):
        raise NumericError(f"non-finite activation at layer {layer}")


def encode_graph(
    x: np.ndarray,
    prop: Propagation,
    attr_nodes: np.ndarray,
    params: ParamStore,
    need_cache: bool = True,
) -> DualEmbedding:
    cfg = params.encoder
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    if x.shape[1] != params.attr_dim or prop.adj.shape != (n, n):
        raise ValueError(f"input shapes {x.shape} / {prop.adj.shape} do not match parameters (attr_dim={params.attr_dim})")
    attr_nodes = np.asarray(attr_nodes, dtype=np.int64)
    adj, sw = prop.adj, prop.self_weight[attr_nodes][:, None]
    h_e = x
    h_a = np.broadcast_to(params["x_prime"], (attr_nodes.size, params.attr_dim)).copy()
    cache = []
    if cfg.base == "gcn":
        for l in range(1, cfg.layers + 1):
            w, b = params[f"enc.W{l}"], params[f"enc.b{l}"]
            s_e = adj @ h_e
            s_a = s_e[attr_nodes] + sw * (h_a - h_e[attr_nodes])
            z_e = s_e @ w + b
            z_a = s_a @ w + b
            if need_cache:
                cache.append((s_e, s_a, z_e, z_a))
            h_e = np.maximum(z_e, 0.0)
            h_a = np.maximum(z_a, 0.0)
            _check_finite(h_e, l)
            _check_finite(h_a, l)
    else:
        for _ in range(cfg.layers):
            s_e = adj @ h_e
            h_a = s_e[attr_nodes] + sw * (h_a - h_e[attr_nodes])
            h_e = s_e
        w, b = params["enc.W1"], params["enc.b1"]
        cache.append((h_e, h_a))
        h_e = h_e @ w + b
        h_a = h_a @ w + b
        _check_finite(h_e, 1)
        _check_finite(h_a, 1)
    return DualEmbedding(h_e, h_a, attr_nodes, cache, prop)


def encode(sg, plan, params: ParamStore, cfg: EncoderConfig | None = None) -> DualEmbedding:
    """Run the encoder over a sampled subgraph with masked edges removed."""
    if cfg is not None and cfg != params.encoder:
        raise ValueError("encoder config does not match parameters")
    obs = plan.observed_edges
    prop = normalized_adjacency(sg.num_nodes, sg.src[obs], sg.dst[obs])
    return encode_graph(sg.attrs, prop, plan.attr_masked_nodes, params)


def embed(x: np.ndarray, prop: Propagation, params: ParamStore, need_cache: bool = False) -> DualEmbedding:
    """Plain edge-stream embeddings (no attribute masking)."""
    return encode_graph(x, prop, np.empty(0, dtype=np.int64), params, need_cache=need_cache)


def encode_backward(emb: DualEmbedding, d_re: np.ndarray, d_ra: np.ndarray | None, params: ParamStore) -> None:
    """Accumulate parameter gradients given dLoss/dr_e and dLoss/dr_a."""
    cfg = params.encoder
    adj = emb.prop.adj
    nodes = emb.attr_nodes
    sw = emb.prop.self_weight[nodes][:, None]
    d_he = np.asarray(d_re, dtype=np.float64)
    d_ha = np.zeros_like(emb.r_a) if d_ra is None else np.asarray(d_ra, dtype=np.float64)
    if cfg.base == "gcn":
        for l in range(cfg.layers, 0, -1):
            s_e, s_a, z_e, z_a = emb.cache[l - 1]
            w = params[f"enc.W{l}"]
            dz_e = d_he * (z_e > 0)
            dz_a = d_ha * (z_a > 0)
            params.grads[f"enc.W{l}"] += s_e.T @ dz_e + s_a.T @ dz_a
            params.grads[f"enc.b{l}"] += dz_e.sum(axis=0) + dz_a.sum(axis=0)
            if l == 1:
                d_ha = sw * (dz_a @ w.T)
                break
            ds_e = dz_e @ w.T
            ds_a = dz_a @ w.T
            total = ds_e.copy()
            np.add.at(total, nodes, ds_a)
            d_he = adj.T @ total
            np.subtract.at(d_he, nodes, sw * ds_a)
            d_ha = sw * ds_a
    else:
        p_e, p_a = emb.cache[0]
        w = params["enc.W1"]
        params.grads["enc.W1"] += p_e.T @ d_he + p_a.T @ d_ha
        params.grads["enc.b1"] += d_he.sum(axis=0) + d_ha.sum(axis=0)
        d_ha = (sw**cfg.layers) * (d_ha @ w.T)
    params.grads["x_prime"] += d_ha.sum(axis=0)


def decode_attrs(r: np.ndarray, params: ParamStore) -> tuple[np.ndarray, tuple]:
    """Two-layer MLP ``relu(r W1 + b1) W2 + b2``; returns (output, cache)."""
    r = np.asarray(r, dtype=np.float64)
    if r.ndim != 2 or r.shape[1] != params["dec.W1"].shape[0]:
        raise ValueError(f"decoder input shape {r.shape} does not match hidden size {params['dec.W1'].shape[0]}")
    z = r @ params["dec.W1"] + params["dec.b1"]
    h = np.maximum(z, 0.0)
    return h @ params["dec.W2"] + params["dec.b2"], (r, z, h)


def decode_backward(cache: tuple, d_out: np.ndarray, params: ParamStore) -> np.ndarray:
    r, z, h = cache
    params.grads["dec.W2"] += h.T @ d_out
    params.grads["dec.b2"] += d_out.sum(axis=0)
    dz = (d_out @ params["dec.W2"].T) * (z > 0)
    params.grads["dec.W1"] += r.T @ dz
    params.grads["dec.b1"] += dz.sum(axis=0)
    return dz @ params["dec.W1"].T
