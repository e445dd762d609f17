"""DAG search space over edge types, concrete meta graphs, and their JSON/DOT forms."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

from .errors import CardinalityError, ConfigError, MetaGraphError
from .hin import HinGraph, task_related_types

IDENTITY = "I"
EMPTY = "O"


def dag_links(K):
    """Links (k, i), sorted by k then i."""
    return tuple((k, i) for k in range(1, K + 1) for i in range(k))


@dataclass(frozen=True)
class SearchSpaceSpec:
    K: int
    target_type: str
    links: tuple
    candidates: dict  # (k, i) -> tuple of choices

    def __hash__(self):
        return hash((self.K, self.target_type, tuple(self.candidates[l] for l in self.links)))

    def index(self, link, choice):
        try:
            return self.candidates[link].index(choice)
        except ValueError:
            raise MetaGraphError(f"choice {choice!r} is not a candidate of link {link}") from None


def candidate_set(k, i, K, all_types, related):
    """Candidate choices of link (k, i): registry order, then I, then O."""
    if k < K:
        base = list(all_types) + [IDENTITY]
    elif i == K - 1:
        return tuple(related)
    else:
        base = list(related) + [IDENTITY]
    if i < k - 1:
        base.append(EMPTY)
    return tuple(base)


def build_space(g: HinGraph, target_type, K) -> SearchSpaceSpec:
    if K < 1:
        raise ConfigError("K must be ≥ 1")
    related = task_related_types(g, target_type)
    if not related:
        raise ConfigError(f"no edge type targets {target_type}")
    all_types = g.registry.names
    related = [n for n in all_types if n in related]
    links = dag_links(K)
    cands = {(k, i): candidate_set(k, i, K, all_types, related) for k, i in links}
    return SearchSpaceSpec(K, target_type, links, cands)


def cardinality(spec: SearchSpaceSpec) -> int:
    return math.prod(len(spec.candidates[l]) for l in spec.links)


def cardinality_formula(n_types, n_related, K):
    """Closed-form count for |A| = n_types, |A-bar| = n_related."""
    return (
        (n_types + 1) ** (K - 1)
        * (n_types + 2) ** ((K - 1) * (K - 2) // 2)
        * n_related
        * (n_related + 2) ** (K - 1)
    )


@dataclass(frozen=True)
class MetaGraph:
    """One choice per link, aligned with ``dag_links(K)``."""

    K: int
    target_type: str
    choices: tuple

    @property
    def links(self):
        return dag_links(self.K)

    @property
    def assignment(self):
        return dict(zip(self.links, self.choices))

    def choice(self, link):
        return self.choices[self.links.index(link)]

    @classmethod
    def from_assignment(cls, K, target_type, assignment):
        missing = [l for l in dag_links(K) if l not in assignment]
        if missing:
            raise MetaGraphError(f"meta graph is missing link {missing[0]}")
        return cls(K, target_type, tuple(assignment[l] for l in dag_links(K)))

    def validate(self, spec: SearchSpaceSpec):
        if self.K != spec.K or self.target_type != spec.target_type:
            raise MetaGraphError(
                f"meta graph (K={self.K}, target={self.target_type}) does not match "
                f"search space (K={spec.K}, target={spec.target_type})"
            )
        for link, c in zip(self.links, self.choices):
            spec.index(link, c)
        return self

    def in_degrees(self):
        deg = [0] * (self.K + 1)
        for (k, _), c in zip(self.links, self.choices):
            if c != EMPTY:
                deg[k] += 1
        return deg[1:]

    def is_meta_path(self):
        return all(d == 1 for d in self.in_degrees())

    def to_json(self):
        return {
            "K": self.K,
            "target_type": self.target_type,
            "links": [{"k": k, "i": i, "choice": c} for (k, i), c in zip(self.links, self.choices)],
        }

    def dumps(self):
        return json.dumps(self.to_json(), indent=2)


def parse_meta_graph(obj, spec: SearchSpaceSpec | None = None, registry=None) -> MetaGraph:
    """Parse the JSON form. Validates against ``spec`` (or ``registry`` names) when given."""
    if isinstance(obj, (str, bytes)):
        try:
            obj = json.loads(obj)
        except json.JSONDecodeError as exc:
            raise MetaGraphError(f"meta graph is not valid JSON: {exc}") from None
    try:
        K = int(obj["K"])
        target = str(obj["target_type"])
        raw = obj["links"]
    except (KeyError, TypeError, ValueError) as exc:
        raise MetaGraphError(f"meta graph missing field {exc}") from None
    if K < 1:
        raise MetaGraphError("K must be ≥ 1")
    assignment = {}
    for entry in raw:
        try:
            link = (int(entry["k"]), int(entry["i"]))
            c = str(entry["choice"])
        except (KeyError, TypeError, ValueError):
            raise MetaGraphError(f"malformed link entry {entry!r}") from None
        if link not in dag_links(K):
            raise MetaGraphError(f"link {link} is not part of a K={K} DAG")
        if link in assignment:
            raise MetaGraphError(f"link {link} assigned twice")
        if registry is not None and c not in (IDENTITY, EMPTY) and c not in registry:
            raise MetaGraphError(f"unknown edge type {c!r} on link {link}")
        assignment[link] = c
    mg = MetaGraph.from_assignment(K, target, assignment)
    if spec is not None:
        mg.validate(spec)
    else:
        # structural rule that holds for every space
        for (k, i), c in zip(mg.links, mg.choices):
            if c == EMPTY and i == k - 1:
                raise MetaGraphError(f"choice 'O' is not allowed on link {(k, i)}")
            if c == IDENTITY and k == K and i == K - 1:
                raise MetaGraphError(f"choice 'I' is not allowed on link {(k, i)}")
    return mg


def enumerate_space(spec: SearchSpaceSpec, cap=None):
    """Yield every meta graph once, in lexicographic candidate order."""
    n = cardinality(spec)
    if cap is not None and n > cap:
        raise CardinalityError(n, cap)
    return _enumerate(spec)


def _enumerate(spec):
    for choices in itertools.product(*(spec.candidates[l] for l in spec.links)):
        yield MetaGraph(spec.K, spec.target_type, choices)


def export_dot(mg: MetaGraph, registry=None) -> str:
    """Graphviz digraph of the meta graph. Edges are labeled with their edge type or 'I'."""
    lines = [f'digraph "metagraph_{mg.target_type}" {{', "  rankdir=LR;"]
    for k in range(mg.K + 1):
        lines.append(f'  H{k} [label="H{k}"];')
    for (k, i), c in zip(mg.links, mg.choices):
        if c == EMPTY:
            continue
        label = c
        if registry is not None and c != IDENTITY:
            e = registry[c]
            label = f"{c} ({e.src}->{e.dst})"
        lines.append(f'  H{i} -> H{k} [label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
