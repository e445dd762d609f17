"""Synthetic HINs with a planted meta graph.

Every edge type is random structure. Labels (or positive pairs) are a
function of raw features aggregated along the planted meta graph, so only
that propagation pattern is predictive.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, MetaGraphError
from .hin import EdgeTypeRegistry, FeatureSet, NodeClassData, PairSet, RecData, directed_registry, make_graph
from .linalg import spmm
from .space import EMPTY, IDENTITY, build_space, parse_meta_graph

PRESETS = {
    "academic": {
        "task": "nodeclass",
        "node_types": {"A": 150, "P": 120, "C": 30},
        "feature_dim": 8,
        "edge_types": [
            {"name": "P-A", "src": "P", "dst": "A", "degree": 3},
            {"name": "A-P", "reverse_of": "P-A"},
            {"name": "C-P", "src": "C", "dst": "P", "degree": 1},
            {"name": "P-C", "reverse_of": "C-P"},
            {"name": "A-A", "src": "A", "dst": "A", "degree": 2},
        ],
        "target_type": "A",
        "planted": [
            {"K": 2, "target_type": "A", "links": [
                {"k": 1, "i": 0, "choice": "C-P"},
                {"k": 2, "i": 0, "choice": "O"},
                {"k": 2, "i": 1, "choice": "P-A"},
            ]},
        ],
        "n_classes": 3,
        "noise": 0.1,
        "split": [0.4, 0.2, 0.4],
    },
    "douban": {
        "task": "rec",
        "node_types": {"U": 60, "M": 50, "G": 12, "A": 20, "D": 10, "T": 6},
        "feature_dim": 8,
        "relations": [["U", "M", 3], ["U", "G", 1], ["U", "U", 2], ["M", "A", 2], ["M", "D", 1], ["M", "T", 1]],
        "source_type": "U",
        "target_type": "M",
        "planted": [
            {"K": 2, "target_type": "U", "links": [
                {"k": 1, "i": 0, "choice": "I"},
                {"k": 2, "i": 0, "choice": "O"},
                {"k": 2, "i": 1, "choice": "G-U"},
            ]},
            {"K": 2, "target_type": "M", "links": [
                {"k": 1, "i": 0, "choice": "I"},
                {"k": 2, "i": 0, "choice": "O"},
                {"k": 2, "i": 1, "choice": "T-M"},
            ]},
        ],
        "n_pairs": 1200,
        "noise": 0.1,
        "split": [0.6, 0.2, 0.2],
    },
}


def load_config(spec):
    """A preset name, a path to a JSON file, or a dict."""
    if isinstance(spec, dict):
        return copy.deepcopy(spec)
    if spec in PRESETS:
        return copy.deepcopy(PRESETS[spec])
    path = Path(spec)
    if not path.is_file():
        raise ConfigError(f"no such synth config or preset: {spec}")
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _random_edges(rng, src_ids, dst_ids, degree, same):
    src, dst = [], []
    for v in dst_ids:
        pool = src_ids[src_ids != v] if same else src_ids
        k = min(degree, len(pool))
        picked = np.sort(rng.choice(pool, size=k, replace=False))
        src.extend(picked.tolist())
        dst.extend([int(v)] * k)
    return np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64)


def _edge_specs(cfg):
    if "relations" in cfg:
        specs = []
        for a, b, deg in cfg["relations"]:
            if a == b:
                specs.append({"name": f"{a}-{a}", "src": a, "dst": a, "degree": deg, "symmetric": True})
            else:
                specs.append({"name": f"{a}-{b}", "src": a, "dst": b, "degree": deg})
                specs.append({"name": f"{b}-{a}", "reverse_of": f"{a}-{b}"})
        return specs
    return cfg["edge_types"]


def propagate_raw(graph, mg, x):
    """Coefficient-1 propagation of raw features along a meta graph."""
    H = [x]
    for k in range(1, mg.K + 1):
        hk = np.zeros_like(x)
        for i in range(k):
            c = mg.choice((k, i))
            if c == IDENTITY:
                hk = hk + H[i]
            elif c != EMPTY:
                hk = hk + spmm(graph.adjacency[c], H[i])
        H.append(hk)
    return H[-1]


def synth_planted(config, seed):
    """Return ``(graph, features, task, planted_meta_graphs)``."""
    cfg = load_config(config)
    rng = np.random.default_rng(seed)
    try:
        counts = cfg["node_types"]
        dim = int(cfg.get("feature_dim", 8))
        noise = float(cfg["noise"])
        task_kind = cfg["task"]
    except KeyError as exc:
        raise ConfigError(f"synth config missing {exc.args[0]}") from None
    if not 0 <= noise <= 1:
        raise ConfigError("noise must lie in [0, 1]")
    type_names = list(counts)
    node_type = np.concatenate([np.full(int(counts[t]), j) for j, t in enumerate(type_names)])
    ids = {t: np.flatnonzero(node_type == j) for j, t in enumerate(type_names)}

    entries, edges = [], {}
    for e in _edge_specs(cfg):
        if "reverse_of" in e:
            base = next((x for x in entries if x[0] == e["reverse_of"]), None)
            if base is None:
                raise ConfigError(f"edge type {e['name']} reverses unknown type {e['reverse_of']}")
            entries.append((e["name"], base[2], base[1]))
            s, d = edges[base[0]]
            edges[e["name"]] = (d.copy(), s.copy())
            continue
        for t in (e["src"], e["dst"]):
            if t not in ids:
                raise ConfigError(f"edge type {e['name']} uses unknown node type {t}")
        entries.append((e["name"], e["src"], e["dst"]))
        s, d = _random_edges(rng, ids[e["src"]], ids[e["dst"]], int(e["degree"]), e["src"] == e["dst"])
        if e.get("symmetric"):
            pairs = sorted(set(zip(s.tolist(), d.tolist())) | set(zip(d.tolist(), s.tolist())))
            s = np.array([p[0] for p in pairs], dtype=np.int64)
            d = np.array([p[1] for p in pairs], dtype=np.int64)
        edges[e["name"]] = (s, d)
    registry = EdgeTypeRegistry(entries)
    graph = make_graph(type_names, node_type, registry, edges, warn_duplicates=False)

    x = rng.normal(size=(len(node_type), dim))
    features = FeatureSet({t: (ids[t], x[ids[t]].copy()) for t in type_names if len(ids[t])})

    planted = []
    for obj in cfg["planted"]:
        try:
            mg = parse_meta_graph(obj, registry=registry)
            mg.validate(build_space(graph, mg.target_type, mg.K))
        except (MetaGraphError, DataError) as exc:
            raise ConfigError(f"planted meta graph: {exc}") from None
        planted.append(mg)

    frac = cfg.get("split", [0.4, 0.2, 0.4])
    if task_kind == "nodeclass":
        target = cfg["target_type"]
        if len(planted) != 1 or planted[0].target_type != target:
            raise ConfigError("node classification needs one planted meta graph on the target type")
        n_classes = int(cfg.get("n_classes", 3))
        nodes = ids[target]
        agg = propagate_raw(graph, planted[0], x)[nodes]
        direction = rng.normal(size=dim)
        score = agg @ (direction / np.linalg.norm(direction))
        cuts = np.quantile(score, np.linspace(0, 1, n_classes + 1)[1:-1])
        y = np.searchsorted(cuts, score, side="right")
        flip = rng.random(len(nodes)) < noise
        y = np.where(flip, rng.integers(n_classes, size=len(nodes)), y)
        labels = np.full(len(node_type), -1, dtype=np.int64)
        labels[nodes] = y
        # every class must appear so class ids stay dense
        order = rng.permutation(nodes)
        a = int(round(frac[0] * len(order)))
        b = a + int(round(frac[1] * len(order)))
        task = NodeClassData(labels, np.sort(order[:a]), np.sort(order[a:b]), np.sort(order[b:]), target)
        if len(np.unique(y)) != n_classes:
            raise DataError("generated labels do not cover every class; enlarge the target type")
    elif task_kind == "rec":
        src_t, dst_t = cfg["source_type"], cfg["target_type"]
        by_target = {mg.target_type: mg for mg in planted}
        if set(by_target) != {src_t, dst_t}:
            raise ConfigError("recommendation needs planted meta graphs for source and target types")
        zs = propagate_raw(graph, by_target[src_t], x)
        zd = propagate_raw(graph, by_target[dst_t], x)
        n_pairs = int(cfg.get("n_pairs", 1000))
        total = len(ids[src_t]) * len(ids[dst_t])
        if n_pairs > total:
            raise ConfigError(f"n_pairs={n_pairs} exceeds the {total} possible pairs")
        flat = rng.choice(total, size=n_pairs, replace=False)
        u = ids[src_t][flat // len(ids[dst_t])]
        v = ids[dst_t][flat % len(ids[dst_t])]
        s = np.einsum("ij,ij->i", zs[u], zd[v])
        lab = (s > np.median(s)).astype(np.int64)
        flip = rng.random(n_pairs) < noise
        lab = np.where(flip, rng.integers(2, size=n_pairs), lab)
        a = int(round(frac[0] * n_pairs))
        b = a + int(round(frac[1] * n_pairs))
        sets = [PairSet(u[sl], v[sl], lab[sl]) for sl in (slice(0, a), slice(a, b), slice(b, None))]
        task = RecData(*sets, source_type=src_t, target_type=dst_t)
    else:
        raise ConfigError(f"unknown task {task_kind!r}")
    return graph, features, task, planted


def douban_registry():
    """Directed edge types of the Douban movie schema (11 types)."""
    return directed_registry([("U", "M"), ("U", "G"), ("U", "U"), ("M", "A"), ("M", "D"), ("M", "T")])
