import numpy as np
import pytest

from kglp.graph import KnowledgeGraph


def make_random_triples(rng, num_entities, num_relations, num_triples):
    h = rng.integers(0, num_entities, size=num_triples)
    r = rng.integers(0, num_relations, size=num_triples)
    t = rng.integers(0, num_entities, size=num_triples)
    return np.stack([h, r, t], axis=1).astype(np.int64)


def make_random_graph(rng, max_entities=40, max_relations=6, max_triples=1000):
    ne = int(rng.integers(3, max_entities + 1))
    nr = int(rng.integers(1, max_relations + 1))
    nt = int(rng.integers(1, max_triples + 1))
    return KnowledgeGraph.from_triples(make_random_triples(rng, ne, nr, nt), ne, nr)


@pytest.fixture
def three_triple_graph():
    # counting fixture: two edges 0->1 (relations 0 and 1), one edge 0->2
    return KnowledgeGraph.from_triples(
        np.array([[0, 0, 1], [0, 1, 1], [0, 0, 2]], dtype=np.int64), 3, 2)
