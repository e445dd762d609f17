import warnings
from pathlib import Path

import numpy as np
import pytest

from mgsearch.hin import EdgeTypeRegistry, FeatureSet, NodeClassData, make_graph
from mgsearch.synth import douban_registry, synth_planted

ROOT = Path(__file__).resolve().parents[1]
DATA = ROOT / "data"


@pytest.fixture(scope="session")
def academic():
    """Planted academic-style HIN (A/P/C, 300 nodes)."""
    return synth_planted("academic", 0)


@pytest.fixture(scope="session")
def douban():
    return synth_planted("douban", 0)


@pytest.fixture(scope="session")
def toy_nodeclass():
    return synth_planted(str(DATA / "toy_nodeclass.json"), 0)


@pytest.fixture(scope="session")
def toy_rec():
    return synth_planted(str(DATA / "toy_rec.json"), 0)


def apc_graph():
    """Four authors, three papers, two conferences: the A/P/C toy schema.

    Returns the graph, identity-like features and a 2-class task on authors.
    """
    types = ["A", "P", "C"]
    node_type = np.array([0, 0, 0, 0, 1, 1, 1, 2, 2])
    reg = EdgeTypeRegistry([("P-A", "P", "A"), ("A-P", "A", "P"), ("C-P", "C", "P"), ("P-C", "P", "C")])
    pa = ([4, 4, 5, 6, 6], [0, 1, 1, 2, 3])
    pc = ([4, 5, 6], [7, 7, 8])
    edges = {"P-A": pa, "A-P": (pa[1], pa[0]), "C-P": (pc[1], pc[0]), "P-C": pc}
    g = make_graph(types, node_type, reg, edges)
    feats = FeatureSet({t: (g.nodes_of(t), np.eye(len(g.nodes_of(t)))) for t in types})
    labels = np.array([0, 1, 0, 1, -1, -1, -1, -1, -1])
    task = NodeClassData(labels, np.array([0, 1]), np.array([2]), np.array([3]), "A")
    return g, feats, task


@pytest.fixture
def apc():
    return apc_graph()


def random_hin(rng, n_types=3, n_etypes=4, max_nodes=20, feat_dim=4):
    """Small random heterogeneous graph with a node-classification task."""
    names = [chr(ord("A") + j) for j in range(n_types)]
    counts = rng.integers(3, max(4, max_nodes // n_types) + 1, size=n_types)
    node_type = np.repeat(np.arange(n_types), counts)
    n = len(node_type)
    entries = []
    # guarantee one edge type into the target A
    pairs = [(int(rng.integers(n_types)), 0)] + [
        (int(rng.integers(n_types)), int(rng.integers(n_types))) for _ in range(n_etypes - 1)
    ]
    edges = {}
    for j, (s, d) in enumerate(pairs):
        name = f"r{j}"
        entries.append((name, names[s], names[d]))
        src_ids = np.flatnonzero(node_type == s)
        dst_ids = np.flatnonzero(node_type == d)
        m = int(rng.integers(1, 2 * len(dst_ids) + 1))
        edges[name] = (rng.choice(src_ids, m), rng.choice(dst_ids, m))
    reg = EdgeTypeRegistry(entries)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        g = make_graph(names, node_type, reg, edges)
    feats = FeatureSet({
        t: (g.nodes_of(t), rng.normal(size=(len(g.nodes_of(t)), int(rng.integers(1, feat_dim + 1)))))
        for t in names
    })
    targets = g.nodes_of("A")
    labels = np.full(n, -1)
    labels[targets] = np.arange(len(targets)) % 2
    perm = rng.permutation(targets)
    task = NodeClassData(labels, np.sort(perm[:2]), np.sort(perm[2:3]), np.sort(perm[3:]), "A")
    return g, feats, task


__all__ = ["apc_graph", "random_hin", "douban_registry", "DATA", "ROOT"]
