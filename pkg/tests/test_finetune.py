import math

import numpy as np
import pytest

from ptdgnn.finetune import (
    FinetuneConfig,
    cooccurrence_pairs,
    draw_negatives,
    finetune,
    finetune_loss,
    negative_distribution,
    temporal_walks,
)
from ptdgnn.graph import chronological_split, generate_synthetic, init_features
from ptdgnn.nn import EncoderConfig, ParamStore

from conftest import make_graph
from gradcheck import compare, finetune_instance
from oracles import finetune_loss_literal


def _monotone(corpus):
    return all(np.all(np.diff(t) >= 0) for t in corpus.times)


def test_path_graph_walks():
    # a=0, b=1, c=2: a-b at t=1, b-c at t=2
    g = make_graph([(0, 1, 1), (1, 2, 2)])
    corpus = temporal_walks(g, np.arange(2), FinetuneConfig(walk_len=5, walks_per_node=200), np.random.default_rng(0))
    seqs = {tuple(w.tolist()) for w in corpus.walks}
    assert any(w[:3] == (0, 1, 2) for w in seqs)
    assert not any(w[:2] in ((1, 2), (2, 1)) and 0 in w for w in seqs)
    assert all(len(w) >= 2 for w in corpus.walks)
    assert _monotone(corpus)


def test_equal_times_unconstrained():
    g = make_graph([(0, 1, 5), (1, 2, 5), (2, 0, 5)])
    corpus = temporal_walks(g, np.arange(3), FinetuneConfig(walk_len=6, walks_per_node=10), np.random.default_rng(0))
    assert all(len(w) == 6 for w in corpus.walks)


def test_corpus_size_and_monotone(synth_graph):
    blocks = chronological_split(synth_graph)
    cfg = FinetuneConfig(walks_per_node=3)
    corpus = temporal_walks(synth_graph, blocks.train, cfg, np.random.default_rng(1))
    nodes = np.unique(np.concatenate([synth_graph.src[blocks.train], synth_graph.dst[blocks.train]]))
    assert len(corpus.walks) == 3 * nodes.size
    assert _monotone(corpus)
    train_nodes = set(nodes.tolist())
    assert all(set(w.tolist()) <= train_nodes for w in corpus.walks)


def test_cooccurrence():
    from ptdgnn.finetune import WalkCorpus

    pairs = cooccurrence_pairs(WalkCorpus([np.array([0, 1, 2])], [np.array([0.0, 0.0])]), 1)
    assert sorted(map(tuple, pairs.tolist())) == [(0, 1), (1, 0), (1, 2), (2, 1)]
    pairs = cooccurrence_pairs(WalkCorpus([np.array([0, 1, 0])], [np.array([0.0, 0.0])]), 2)
    assert all(a != b for a, b in pairs.tolist())


def test_loss_zero_dot():
    r = np.zeros((4, 3))
    assert finetune_loss(np.array([[0, 1]]), np.array([[2]]), r) == pytest.approx(2 * math.log(2), abs=1e-15)


def test_loss_limit():
    r = np.array([[10.0], [10.0], [-10.0]])
    assert finetune_loss(np.array([[0, 1]]), np.array([[2]]), r) < 1e-40


def test_loss_matches_literal():
    rng = np.random.default_rng(0)
    for _ in range(20):
        r = rng.standard_normal((6, 4))
        pairs = rng.integers(0, 6, (3, 2))
        negs = rng.integers(0, 6, (3, 2))
        assert finetune_loss(pairs, negs, r) == pytest.approx(finetune_loss_literal(pairs, negs, r), abs=1e-12)


def test_loss_gradients():
    for seed in range(3):
        params, f, names = finetune_instance(seed)
        assert compare(params, f) <= 1.0


def test_noise_distribution():
    g = make_graph([(0, 1, 0), (0, 2, 0), (0, 3, 0), (4, 5, 9)])
    p = negative_distribution(g, np.arange(3), 0.75)
    assert p[4] == p[5] == 0
    assert p[0] / p[1] == pytest.approx(3**0.75)
    draws = draw_negatives(p, 1000, 2, np.random.default_rng(0))
    assert draws.shape == (1000, 2) and set(np.unique(draws).tolist()) <= {0, 1, 2, 3}


@pytest.fixture(scope="module")
def setup():
    g = generate_synthetic(200, 2, seed=1)
    g = g.with_attrs(init_features(g, "seeded-gaussian", 8, 1))
    return g, chronological_split(g)


def test_zero_epochs_returns_init(setup):
    g, blocks = setup
    enc = EncoderConfig(2, 8)
    init = ParamStore.init(enc, 8, 3)
    res = finetune(g, blocks, FinetuneConfig(epochs=0, encoder=enc), init)
    assert res.trace == [] and res.best_epoch == -1
    assert all(np.array_equal(res.params[k], init[k]) for k in init.names())


def test_best_epoch_and_decoder_frozen(setup):
    g, blocks = setup
    enc = EncoderConfig(2, 8)
    init = ParamStore.init(enc, 8, 3)
    res = finetune(g, blocks, FinetuneConfig(epochs=4, encoder=enc, seed=2), init)
    aucs = [rep.auc for _, _, rep in res.trace]
    assert res.best_epoch == int(np.argmax(aucs))
    assert np.array_equal(res.params["dec.W1"], init["dec.W1"])
    again = finetune(g, blocks, FinetuneConfig(epochs=4, encoder=enc, seed=2), init)
    assert [t[1] for t in again.trace] == [t[1] for t in res.trace]


def test_encoder_mismatch(setup):
    g, blocks = setup
    with pytest.raises(ValueError):
        finetune(g, blocks, FinetuneConfig(encoder=EncoderConfig(2, 8)), ParamStore.init(EncoderConfig(2, 9), 8))


def test_config_validation():
    with pytest.raises(ValueError):
        FinetuneConfig(walk_len=1)
    with pytest.raises(ValueError):
        FinetuneConfig(input_graph="future")
