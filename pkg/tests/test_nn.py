import json

import numpy as np
import pytest

from ptdgnn.masker import MaskConfig, MaskPlan, mask_subgraph
from ptdgnn.nn import (
    EncoderConfig,
    NumericError,
    ParamStore,
    adamw_step,
    decode_attrs,
    encode,
    encode_graph,
    normalized_adjacency,
    sum_of_squares,
)

from conftest import make_subgraph
from gradcheck import compare, pretrain_instance


def _params(layers=2, hidden=4, attr_dim=3, base="gcn", seed=0):
    return ParamStore.init(EncoderConfig(layers, hidden, base), attr_dim, seed)


def _plan(sg, masked=(), attr=()):
    masked = np.asarray(masked, dtype=np.int64)
    obs = np.setdiff1d(np.arange(sg.num_edges), masked)
    return MaskPlan(masked, obs, np.asarray(attr, dtype=np.int64))


def test_identity_case():
    p = _params(1, 3, 3)
    p.tensors["enc.W1"][...] = np.eye(3)
    x = np.array([[1.0, -2.0, 0.5]])
    prop = normalized_adjacency(1, np.empty(0, int), np.empty(0, int))
    r = encode_graph(x, prop, np.empty(0, int), p).r_e
    assert np.array_equal(r, np.maximum(x, 0))


def test_no_edges_is_per_node_transform():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((4, 3))
    p = _params(2, 5, 3)
    prop = normalized_adjacency(4, np.empty(0, int), np.empty(0, int))
    r = encode_graph(x, prop, np.empty(0, int), p).r_e
    h = np.maximum(x @ p["enc.W1"] + p["enc.b1"], 0)
    assert np.allclose(r, np.maximum(h @ p["enc.W2"] + p["enc.b2"], 0))


def test_isomorphic_nodes_identical():
    # 1 and 2 both hang off 0 with the same attributes
    sg = make_subgraph([(0, 1), (0, 2), (0, 3)], attrs=np.array([[1.0, 0], [0.5, 0.5], [0.5, 0.5], [0, 2.0]]))
    r = encode(sg, _plan(sg), _params(3, 6, 2)).r_e
    assert np.array_equal(r[1], r[2])


def test_permutation_equivariance():
    rng = np.random.default_rng(1)
    edges = np.array([(0, 1), (1, 2), (2, 3), (3, 0), (0, 2), (4, 1)])
    x = rng.standard_normal((5, 3))
    p = _params(3, 4, 3, seed=2)
    perm = rng.permutation(5)
    inv = np.argsort(perm)
    for base in ("gcn", "sgc"):
        p = _params(3, 4, 3, base, seed=2)
        a = encode_graph(x, normalized_adjacency(5, edges[:, 0], edges[:, 1]), np.empty(0, int), p).r_e
        b = encode_graph(x[perm], normalized_adjacency(5, inv[edges[:, 0]], inv[edges[:, 1]]), np.empty(0, int), p).r_e
        assert np.allclose(a[perm], b, atol=1e-13)


def test_r_a_isolation_and_masked_edge_blindness():
    rng = np.random.default_rng(3)
    sg = make_subgraph([(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)], attrs=rng.standard_normal((4, 3)))
    p = _params(3, 5, 3)
    plan = _plan(sg, masked=[4], attr=[0, 2])
    base = encode(sg, plan, p)
    p2 = p.copy()
    p2.tensors["x_prime"][...] = 0.0
    assert np.array_equal(encode(sg, plan, p2).r_e, base.r_e)
    assert not np.array_equal(encode(sg, plan, p2).r_a, base.r_a)
    # dropping the masked edge entirely changes nothing
    sg2 = make_subgraph([(0, 1), (1, 2), (2, 3), (3, 0)], attrs=sg.attrs)
    assert np.array_equal(encode(sg2, _plan(sg2, attr=[0, 2]), p).r_e, base.r_e)


def test_r_a_ignores_own_attributes_in_one_layer():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((3, 2))
    prop = normalized_adjacency(3, np.array([0, 1]), np.array([1, 2]))
    x2 = x.copy()
    x2[1] += 5.0
    p = _params(1, 4, 2)
    a = encode_graph(x, prop, np.array([1]), p).r_a
    b = encode_graph(x2, prop, np.array([1]), p).r_a
    assert np.allclose(a, b, atol=1e-12)


def test_decoder_linearity():
    p = _params()
    for k in ("dec.W1", "dec.b1", "dec.W2"):
        p.tensors[k][...] = 0.0
    p.tensors["dec.b2"][...] = [1.0, 2.0, 3.0]
    out, _ = decode_attrs(np.ones((2, 4)), p)
    assert out.tolist() == [[1.0, 2.0, 3.0]] * 2
    with pytest.raises(ValueError):
        decode_attrs(np.ones((2, 3)), p)


def test_sum_of_squares_gradient():
    p = _params()
    p.zero_grad()
    sum_of_squares(p)
    for k in p.names():
        assert np.array_equal(p.grads[k], 2 * p[k])


def _scalar_store(value=1.0):
    enc = EncoderConfig(1, 1)
    p = ParamStore.init(enc, 1)
    for k in p.names():
        p.tensors[k][...] = value
    return p


def test_adamw_examples():
    p = _scalar_store()
    for k in p.names():
        p.grads[k][...] = 1.0
    adamw_step(p, lr=0.001, weight_decay=0.0)
    assert abs(p["enc.W1"].item() - 0.999) < 1e-8
    assert all(np.all(g == 0) for g in p.grads.values())
    q = _scalar_store()
    adamw_step(q, lr=0.001, weight_decay=0.01)
    assert q["enc.W1"].item() == pytest.approx(0.99999, abs=1e-15)
    z = _scalar_store()
    adamw_step(z, weight_decay=0.0)
    assert z["enc.W1"].item() == 1.0


def test_adamw_rejects_nan():
    p = _scalar_store()
    p.grads["enc.W1"][...] = np.nan
    with pytest.raises(NumericError):
        adamw_step(p)
    assert p["enc.W1"].item() == 1.0


def test_checkpoint_round_trip(tmp_path):
    p = _params(3, 6, 4, "sgc", seed=9)
    p.save(tmp_path / "c.json", {"note": 1})
    q = ParamStore.load(tmp_path / "c.json", expect=p.encoder)
    assert all(np.array_equal(p[k], q[k]) for k in p.names())
    with pytest.raises(ValueError):
        ParamStore.load(tmp_path / "c.json", expect=EncoderConfig(3, 7, "sgc"))
    doc = json.loads((tmp_path / "c.json").read_text())
    doc["tensors"]["enc.W1"]["shape"] = [2, 12]
    (tmp_path / "bad.json").write_text(json.dumps(doc))
    with pytest.raises(ValueError):
        ParamStore.load(tmp_path / "bad.json")


def test_zero_loss_zero_grad():
    sg = make_subgraph([(0, 1), (1, 2)], attrs=np.ones((3, 3)))
    from ptdgnn.pretrain import EdgeLossBatch, pretrain_loss

    p = _params()
    p.zero_grad()
    empty = EdgeLossBatch(np.empty(0, int), [], [])
    le, la = pretrain_loss(sg, _plan(sg), empty, p, 1.0)
    assert le == la == 0.0
    assert all(np.all(g == 0) for g in p.grads.values())


@pytest.mark.parametrize("base", ["gcn", "sgc"])
def test_full_loss_gradients(base):
    for seed in range(3):
        params, f = pretrain_instance(seed, base)
        assert compare(params, f) <= 1.0


def test_bad_encoder_config():
    with pytest.raises(ValueError):
        EncoderConfig(base="gat")
    with pytest.raises(ValueError):
        encode_graph(np.ones((2, 5)), normalized_adjacency(2, np.array([0]), np.array([1])), np.empty(0, int), _params())
