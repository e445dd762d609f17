"""Heterogeneous information networks: data model, TSV ingestion and export."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import IngestError, SchemaError
from .linalg import SparseMatrix, row_normalize

RESERVED_NAMES = ("I", "O")


class EdgeType(NamedTuple):
    name: str
    src: str
    dst: str


class EdgeTypeRegistry:
    """Ordered, name-unique collection of edge types."""

    def __init__(self, entries):
        self.entries = tuple(EdgeType(*e) for e in entries)
        names = [e.name for e in self.entries]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate edge type name in registry")
        for n in names:
            if n in RESERVED_NAMES:
                raise SchemaError(f"edge type name {n!r} is reserved")
        self._by_name = {e.name: e for e in self.entries}

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def __contains__(self, name):
        return name in self._by_name

    def __getitem__(self, name) -> EdgeType:
        try:
            return self._by_name[name]
        except KeyError:
            raise SchemaError(f"unknown edge type {name!r}") from None

    @property
    def names(self):
        return [e.name for e in self.entries]

    def node_types(self):
        seen = {}
        for e in self.entries:
            seen.setdefault(e.src, None)
            seen.setdefault(e.dst, None)
        return list(seen)


def directed_registry(relations, sep="-"):
    """Expand undirected schema relations into directed edge types.

    ``("U", "M")`` gives ``U-M`` (U to M) and ``M-U``; a relation between a
    type and itself gives a single symmetric type.
    """
    entries = []
    for a, b in relations:
        entries.append((f"{a}{sep}{b}", a, b))
        if a != b:
            entries.append((f"{b}{sep}{a}", b, a))
    return EdgeTypeRegistry(entries)


@dataclass(frozen=True, eq=False)
class HinGraph:
    """Typed graph over one global node index.

    ``adjacency[r]`` is N x N, rows are destination nodes and columns source
    nodes, so ``spmm(adjacency[r], H)`` aggregates into destinations.
    """

    type_names: tuple
    node_type: np.ndarray
    registry: EdgeTypeRegistry
    adjacency: dict

    @property
    def n_nodes(self):
        return len(self.node_type)

    def type_index(self, name):
        try:
            return self.type_names.index(name)
        except ValueError:
            raise SchemaError(f"unknown node type {name!r}") from None

    def nodes_of(self, type_name):
        return np.flatnonzero(self.node_type == self.type_index(type_name))

    def type_of(self, node):
        return self.type_names[self.node_type[node]]

    def edges(self, etype):
        """(src_ids, dst_ids) of the stored edges of one type."""
        a = self.adjacency[etype]
        return a.indices.copy(), a.row_ids()


@dataclass(frozen=True, eq=False)
class FeatureSet:
    """Per node type: global node ids and their feature rows."""

    by_type: dict

    def dim(self, type_name):
        return self.by_type[type_name][1].shape[1]

    @classmethod
    def one_hot(cls, graph: HinGraph):
        out = {}
        for t in graph.type_names:
            ids = graph.nodes_of(t)
            if len(ids):
                out[t] = (ids, np.eye(len(ids)))
        return cls(out)


@dataclass(frozen=True, eq=False)
class NodeClassData:
    labels: np.ndarray  # per node, -1 when unlabeled
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray
    target_type: str
    kind: str = field(default="nodeclass", init=False)

    @property
    def n_classes(self):
        return int(self.labels.max()) + 1

    def split(self, name):
        return getattr(self, name)


@dataclass(frozen=True, eq=False)
class PairSet:
    src: np.ndarray
    dst: np.ndarray
    label: np.ndarray

    def __len__(self):
        return len(self.label)

    @classmethod
    def concat(cls, *sets):
        return cls(*(np.concatenate([getattr(s, f) for s in sets]) for f in ("src", "dst", "label")))


@dataclass(frozen=True, eq=False)
class RecData:
    train: PairSet
    val: PairSet
    test: PairSet
    source_type: str
    target_type: str
    kind: str = field(default="rec", init=False)

    def split(self, name):
        return getattr(self, name)


def make_graph(type_names, node_type, registry, edges, *, warn_duplicates=True):
    """Validate typed edges and build the normalized adjacency per edge type.

    ``edges`` maps etype name to ``(src_ids, dst_ids)``.
    """
    type_names = tuple(type_names)
    node_type = np.asarray(node_type, dtype=np.int64)
    n = len(node_type)
    for e in registry:
        for t in (e.src, e.dst):
            if t not in type_names:
                raise SchemaError(f"edge type {e.name!r} references undeclared node type {t!r}")
    adjacency = {}
    for e in registry:
        src, dst = edges.get(e.name, ((), ()))
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        if len(src):
            bad = (node_type[src] != type_names.index(e.src)) | (node_type[dst] != type_names.index(e.dst))
            if bad.any():
                j = int(np.flatnonzero(bad)[0])
                raise SchemaError(
                    f"edge {src[j]}->{dst[j]} of type {e.name!r} contradicts registry ({e.src}->{e.dst})"
                )
        raw = SparseMatrix.from_coo(dst, src, np.ones(len(src)), (n, n))
        if raw.nnz < len(src) and warn_duplicates:
            warnings.warn(f"{len(src) - raw.nnz} duplicate edges of type {e.name!r} collapsed", stacklevel=2)
        # duplicates were summed; collapse them to weight 1
        raw = SparseMatrix(n, n, raw.indptr, raw.indices, np.ones(raw.nnz))
        adjacency[e.name] = row_normalize(raw)
    if len(type_names) + len(registry) <= 2:
        warnings.warn("graph is not heterogeneous (|node types| + |edge types| <= 2)", stacklevel=2)
    return HinGraph(type_names, node_type, registry, adjacency)


def task_related_types(g: HinGraph, target_type: str) -> set:
    """Edge types whose destination is ``target_type``."""
    g.type_index(target_type)
    return {e.name for e in g.registry if e.dst == target_type}


# TSV I/O

def _lines(path: Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if line.strip():
                yield lineno, line.split("\t")


def _node_id(tok, n, path, lineno):
    try:
        v = int(tok)
    except ValueError:
        raise IngestError(f"{path.name}:{lineno}: bad node id {tok!r}") from None
    if not 0 <= v < n:
        raise IngestError(f"{path.name}:{lineno}: node id out of range ({v}, N={n})")
    return v


def load_hin(directory):
    """Read a dataset directory. Returns ``(graph, features, task)``; ``task`` may be None."""
    d = Path(directory)
    for req in ("node_types.tsv", "edge_types.tsv", "edges.tsv"):
        if not (d / req).is_file():
            raise IngestError(f"missing required file {req} in {d}")

    ids, types = [], []
    path = d / "node_types.tsv"
    for lineno, parts in _lines(path):
        if len(parts) != 2:
            raise IngestError(f"{path.name}:{lineno}: expected 2 fields")
        try:
            ids.append(int(parts[0]))
        except ValueError:
            raise IngestError(f"{path.name}:{lineno}: bad node id {parts[0]!r}") from None
        types.append(parts[1])
    n = len(ids)
    if sorted(ids) != list(range(n)):
        raise IngestError(f"{path.name}: node ids must be contiguous 0..N-1")
    type_names = list(dict.fromkeys(t for _, t in sorted(zip(ids, types))))
    node_type = np.empty(n, dtype=np.int64)
    for i, t in zip(ids, types):
        node_type[i] = type_names.index(t)

    path = d / "edge_types.tsv"
    entries = []
    for lineno, parts in _lines(path):
        if len(parts) != 3:
            raise IngestError(f"{path.name}:{lineno}: expected 3 fields")
        entries.append(tuple(parts))
    registry = EdgeTypeRegistry(entries)

    path = d / "edges.tsv"
    edges = {e.name: ([], []) for e in registry}
    for lineno, parts in _lines(path):
        if len(parts) != 3:
            raise IngestError(f"{path.name}:{lineno}: expected 3 fields")
        s = _node_id(parts[0], n, path, lineno)
        t = _node_id(parts[1], n, path, lineno)
        if parts[2] not in registry:
            raise SchemaError(f"{path.name}:{lineno}: unknown edge type {parts[2]!r}")
        e = registry[parts[2]]
        if type_names[node_type[s]] != e.src or type_names[node_type[t]] != e.dst:
            raise SchemaError(
                f"{path.name}:{lineno}: edge {s}->{t} has endpoint types "
                f"{type_names[node_type[s]]}->{type_names[node_type[t]]}, registry says {e.src}->{e.dst}"
            )
        edges[e.name][0].append(s)
        edges[e.name][1].append(t)
    graph = make_graph(type_names, node_type, registry, edges)

    features = _load_features(d / "features.tsv", graph) if (d / "features.tsv").is_file() else FeatureSet.one_hot(graph)
    return graph, features, _load_task(d, graph)


def _load_features(path, graph):
    n = graph.n_nodes
    rows = {}
    for lineno, parts in _lines(path):
        if len(parts) != 2:
            raise IngestError(f"{path.name}:{lineno}: expected 2 fields")
        v = _node_id(parts[0], n, path, lineno)
        try:
            rows[v] = np.array([float(x) for x in parts[1].split()])
        except ValueError:
            raise IngestError(f"{path.name}:{lineno}: bad feature value") from None
    out = {}
    for t in graph.type_names:
        ids = graph.nodes_of(t)
        if not len(ids):
            continue
        missing = [int(i) for i in ids if int(i) not in rows]
        if missing:
            raise IngestError(f"{path.name}: node {missing[0]} of type {t} has no feature row")
        dims = {len(rows[int(i)]) for i in ids}
        if len(dims) != 1 or 0 in dims:
            raise IngestError(f"{path.name}: nodes of type {t} have inconsistent feature dims {sorted(dims)}")
        out[t] = (ids, np.stack([rows[int(i)] for i in ids]))
    return FeatureSet(out)


def _read_ids(path, n):
    return np.array([_node_id(p[0], n, path, ln) for ln, p in _lines(path)], dtype=np.int64)


def _load_task(d, graph):
    n = graph.n_nodes
    has_nc = (d / "labels.tsv").is_file()
    has_rec = (d / "task.txt").is_file()
    if has_nc and has_rec:
        raise IngestError(f"{d}: both labels.tsv and task.txt present")
    if has_nc:
        path = d / "labels.tsv"
        labels = np.full(n, -1, dtype=np.int64)
        for lineno, parts in _lines(path):
            v = _node_id(parts[0], n, path, lineno)
            try:
                labels[v] = int(parts[1])
            except (ValueError, IndexError):
                raise IngestError(f"{path.name}:{lineno}: bad class id") from None
        splits = [_read_ids(d / f"split_{s}.txt", n) for s in ("train", "val", "test")]
        labeled = labels[labels >= 0]
        if labeled.min() < 0 or set(np.unique(labeled)) != set(range(int(labeled.max()) + 1)):
            raise SchemaError("class ids must be dense in [0, C)")
        targets = {graph.type_of(v) for v in np.flatnonzero(labels >= 0)}
        if len(targets) != 1:
            raise SchemaError(f"labeled nodes span several node types: {sorted(targets)}")
        data = NodeClassData(labels, *splits, target_type=targets.pop())
        _check_nodeclass(data)
        return data
    if has_rec:
        kv = {}
        for line in (d / "task.txt").read_text(encoding="utf-8").splitlines():
            if "=" in line:
                k, v = line.split("=", 1)
                kv[k.strip()] = v.strip()
        try:
            src_t, dst_t = kv["source_type"], kv["target_type"]
        except KeyError as exc:
            raise IngestError(f"task.txt: missing {exc.args[0]}") from None
        graph.type_index(src_t)
        graph.type_index(dst_t)
        sets = []
        for s in ("train", "val", "test"):
            path = d / f"pairs_{s}.tsv"
            u, v, y = [], [], []
            for lineno, parts in _lines(path):
                if len(parts) != 3 or parts[2] not in ("0", "1"):
                    raise IngestError(f"{path.name}:{lineno}: expected src<TAB>dst<TAB>label(0/1)")
                u.append(_node_id(parts[0], n, path, lineno))
                v.append(_node_id(parts[1], n, path, lineno))
                y.append(int(parts[2]))
            sets.append(PairSet(np.array(u, dtype=np.int64), np.array(v, dtype=np.int64), np.array(y, dtype=np.int64)))
        data = RecData(*sets, source_type=src_t, target_type=dst_t)
        check_rec(data, graph)
        return data
    return None


def _check_nodeclass(data):
    sets = [set(map(int, data.split(s))) for s in ("train", "val", "test")]
    if sets[0] & sets[1] or sets[0] & sets[2] or sets[1] & sets[2]:
        raise SchemaError("train/val/test splits overlap")
    for s in sets:
        for v in s:
            if data.labels[v] < 0:
                raise SchemaError(f"split node {v} has no label")


def check_rec(data, graph):
    si, ti = graph.type_index(data.source_type), graph.type_index(data.target_type)
    for name in ("train", "val", "test"):
        ps = data.split(name)
        if len(ps) and ((graph.node_type[ps.src] != si).any() or (graph.node_type[ps.dst] != ti).any()):
            raise SchemaError(f"{name} pairs reference nodes of the wrong type")


def write_hin(directory, graph: HinGraph, features: FeatureSet | None = None, task=None):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)

    def put(name, lines):
        with open(d / name, "w", encoding="utf-8", newline="\n") as fh:
            fh.writelines(line + "\n" for line in lines)

    put("node_types.tsv", (f"{v}\t{graph.type_of(v)}" for v in range(graph.n_nodes)))
    put("edge_types.tsv", (f"{e.name}\t{e.src}\t{e.dst}" for e in graph.registry))
    lines = []
    for e in graph.registry:
        src, dst = graph.edges(e.name)
        lines.extend(f"{s}\t{t}\t{e.name}" for s, t in zip(src, dst))
    put("edges.tsv", lines)
    if features is not None:
        rows = {}
        for ids, x in features.by_type.values():
            for i, row in zip(ids, x):
                rows[int(i)] = " ".join(repr(float(v)) for v in row)
        put("features.tsv", (f"{v}\t{rows[v]}" for v in sorted(rows)))
    if isinstance(task, NodeClassData):
        put("labels.tsv", (f"{v}\t{task.labels[v]}" for v in np.flatnonzero(task.labels >= 0)))
        for s in ("train", "val", "test"):
            put(f"split_{s}.txt", (str(v) for v in task.split(s)))
    elif isinstance(task, RecData):
        for s in ("train", "val", "test"):
            ps = task.split(s)
            put(f"pairs_{s}.tsv", (f"{u}\t{v}\t{y}" for u, v, y in zip(ps.src, ps.dst, ps.label)))
        put("task.txt", [f"source_type={task.source_type}", f"target_type={task.target_type}"])
