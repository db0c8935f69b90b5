import numpy as np
import pytest

from indlp.kg import build_graph

FIVE_TRIPLES = [
    ("e1", "r1", "e1"),
    ("e1", "r2", "e2"),
    ("e1", "r4", "e4"),
    ("e2", "r3", "e3"),
    ("e2", "r2", "e4"),
]

FIVE_TRIPLE_EDGES = {
    ("r1", "r2"): 2, ("r1", "r4"): 2,
    ("r2", "r1"): 1, ("r2", "r2"): 1, ("r2", "r3"): 2, ("r2", "r4"): 2,
    ("r3", "r2"): 1,
    ("r4", "r1"): 1, ("r4", "r2"): 2,
}


@pytest.fixture
def five_triple_graph():
    return build_graph(FIVE_TRIPLES)


def random_triples(rng: np.random.Generator, n_entities=30, n_relations=8, n_triples=200):
    h = rng.integers(0, n_entities, n_triples)
    r = rng.integers(0, n_relations, n_triples)
    t = rng.integers(0, n_entities, n_triples)
    return [(f"e{a}", f"r{b}", f"e{c}") for a, b, c in zip(h, r, t)]
