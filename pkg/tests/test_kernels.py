import os
import subprocess
import sys

import numpy as np
import pytest

from indlp import kernels, relwalk
from indlp.kg import build_graph
from indlp.relwalk import WalkConfig
from indlp.weidner import build_network

from conftest import random_triples

compiled = pytest.mark.skipif(not kernels.COMPILED, reason="compiled extension not built")


def _network(seed=0):
    rng = np.random.default_rng(seed)
    return build_network(build_graph(random_triples(rng, 15, 7, 90)))


def _walk_inputs(net, n=200, length=12, seed=0):
    rng = np.random.default_rng(seed)
    starts = rng.choice(np.flatnonzero(net.out_degree() > 0), n)
    uniforms = rng.random((n, length - 1))
    return starts, uniforms


@compiled
@pytest.mark.parametrize("p,q", [(1.0, 1.0), (0.5, 2.0), (4.0, 0.25)])
def test_walk_kernel_parity(p, q):
    net = _network()
    starts, u = _walk_inputs(net)
    outs = []
    for impl in (kernels, kernels.reference):
        out = np.full((len(starts), 12), -1, dtype=np.int64)
        lengths = impl.walk_kernel(net.indptr, net.targets, net.weights.astype(float), starts, u,
                                   12, p, q, out)
        outs.append((out, lengths))
    np.testing.assert_array_equal(outs[0][0], outs[1][0])
    np.testing.assert_array_equal(outs[0][1], outs[1][1])


@compiled
def test_sgns_kernel_parity():
    net = _network(1)
    cfg = WalkConfig(num_walks_per_node=3, walk_length=8, window_size=3, epochs=1, dim=6,
                     negatives_per_positive=3, seed=4)
    corpus = relwalk.generate_walks(net, cfg)
    results = []
    for impl in (kernels, kernels.reference):
        center = relwalk.init_center_vectors(corpus.n_nodes, cfg.dim, 0)
        context = np.zeros_like(center)
        pairs = relwalk._pairs_per_walk(np.diff(corpus.offsets), cfg.window_size)
        need = pairs * cfg.negatives_per_positive
        neg_start = np.concatenate([[0], np.cumsum(need)[:-1]]).astype(np.int64)
        negatives = np.random.default_rng(0).integers(0, corpus.n_nodes, int(need.sum()))
        lrs = np.linspace(0.025, 0.01, len(corpus))
        loss, n = impl.sgns_kernel(corpus.flat, corpus.offsets, 0, len(corpus), cfg.window_size,
                                   center, context, negatives, neg_start,
                                   cfg.negatives_per_positive, lrs)
        results.append((loss, n, center, context))
    assert results[0][1] == results[1][1]
    # same operation order; libm exp/log1p may differ from Python's in the last ulp
    assert results[0][0] == pytest.approx(results[1][0], rel=1e-12)
    np.testing.assert_allclose(results[0][2], results[1][2], rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(results[0][3], results[1][3], rtol=1e-10, atol=1e-14)


@compiled
def test_embed_relations_parity(monkeypatch):
    net = _network(2)
    cfg = WalkConfig(num_walks_per_node=4, walk_length=6, window_size=2, epochs=3, dim=5, seed=1)
    fast = relwalk.embed_relations(net, cfg)
    monkeypatch.setattr(relwalk, "kernels", kernels.reference)
    slow = relwalk.embed_relations(net, cfg)
    np.testing.assert_allclose(fast.vectors, slow.vectors, rtol=1e-9, atol=1e-13)


def test_pairs_per_walk_closed_form():
    for L in range(0, 15):
        for w in range(1, 6):
            brute = sum(1 for i in range(L) for j in range(L) if i != j and abs(i - j) <= w)
            assert relwalk._pairs_per_walk(np.array([L]), w)[0] == brute


def test_pure_python_env_switch():
    code = "import indlp.kernels as k; print(k.IMPLEMENTATION)"
    env = dict(os.environ, INDLP_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True)
    assert out.stdout.strip() == "python"
