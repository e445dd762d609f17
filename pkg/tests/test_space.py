import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mgsearch.errors import CardinalityError, ConfigError, MetaGraphError
from mgsearch.hin import EdgeTypeRegistry, make_graph
from mgsearch.space import (
    EMPTY,
    IDENTITY,
    MetaGraph,
    build_space,
    candidate_set,
    cardinality,
    cardinality_formula,
    dag_links,
    enumerate_space,
    export_dot,
    parse_meta_graph,
)


def registry_graph(n_types, n_related, target="T"):
    """Graph whose registry has ``n_types`` edge types, ``n_related`` of them into ``target``."""
    entries = [(f"x{j}", "S", target) for j in range(n_related)]
    entries += [(f"y{j}", "S", "S") for j in range(n_types - n_related)]
    reg = EdgeTypeRegistry(entries)
    return make_graph(["S", target], [0, 0, 1], reg, {})


@pytest.fixture(scope="module")
def douban_u(douban):
    return build_space(douban[0], "U", 4)


class TestCandidates:
    def test_douban_link_sizes(self, douban_u):
        sp = douban_u
        assert len(sp.candidates[(3, 2)]) == 12
        assert sp.candidates[(3, 2)][-1] == IDENTITY
        assert len(sp.candidates[(4, 3)]) == 3
        assert set(sp.candidates[(4, 3)]) == {"M-U", "G-U", "U-U"}
        assert len(sp.candidates[(4, 0)]) == 5
        assert sp.candidates[(4, 0)][-2:] == (IDENTITY, EMPTY)
        assert len(sp.candidates[(3, 0)]) == 13

    def test_case_table_shape(self, douban_u):
        K = douban_u.K
        for (k, i), cands in douban_u.candidates.items():
            assert (IDENTITY in cands) == (not (k == K and i == K - 1))
            assert (EMPTY in cands) == (i < k - 1)

    def test_order_is_registry_then_i_then_o(self, douban):
        g = douban[0]
        c = candidate_set(3, 0, 4, g.registry.names, [])
        assert c == tuple(g.registry.names) + (IDENTITY, EMPTY)

    def test_links(self):
        assert dag_links(3) == ((1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2))
        assert len(dag_links(5)) == 15

    def test_k1(self, douban):
        sp = build_space(douban[0], "U", 1)
        assert sp.links == ((1, 0),)
        assert len(sp.candidates[(1, 0)]) == 3

    def test_errors(self, douban):
        with pytest.raises(ConfigError, match="K must be"):
            build_space(douban[0], "U", 0)
        g = registry_graph(2, 0)
        with pytest.raises(ConfigError, match="no edge type targets T"):
            build_space(g, "T", 2)


class TestCardinality:
    def test_douban_value(self, douban_u):
        assert cardinality(douban_u) == 1_423_656_000
        assert cardinality(douban_u) == 12**3 * 13**3 * 3 * 5**3

    def test_small(self, douban):
        assert cardinality(build_space(douban[0], "U", 1)) == 3
        assert cardinality(build_space(douban[0], "U", 2)) == 180

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 12), st.integers(1, 5), st.integers(1, 6))
    def test_formula(self, n_types, n_related, K):
        n_related = min(n_related, n_types)
        sp = build_space(registry_graph(n_types, n_related), "T", K)
        assert cardinality(sp) == cardinality_formula(n_types, n_related, K)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 3))
    def test_enumeration_matches(self, n_types, n_related, K):
        n_related = min(n_related, n_types)
        sp = build_space(registry_graph(n_types, n_related), "T", K)
        if cardinality(sp) > 20000:
            return
        mgs = list(enumerate_space(sp))
        assert len(mgs) == cardinality(sp)
        assert len(set(mgs)) == len(mgs)


class TestEnumerate:
    def test_nine(self):
        sp = build_space(registry_graph(2, 1), "T", 2)
        mgs = list(enumerate_space(sp))
        assert len(mgs) == 9 and len({m.choices for m in mgs}) == 9
        # lexicographic in candidate order
        assert mgs[0].choices == (sp.candidates[(1, 0)][0], sp.candidates[(2, 0)][0], sp.candidates[(2, 1)][0])
        assert mgs[1].choices[1] == sp.candidates[(2, 0)][1]

    def test_cap(self, douban_u):
        with pytest.raises(CardinalityError, match="1423656000"):
            enumerate_space(douban_u, cap=1000)


class TestMetaGraph:
    def test_meta_path_detection(self):
        mg = MetaGraph(2, "A", ("C-P", EMPTY, "P-A"))
        assert mg.in_degrees() == [1, 1]
        assert mg.is_meta_path()
        assert not MetaGraph(2, "A", ("C-P", "P-A", "P-A")).is_meta_path()

    def test_json_round_trip(self, douban_u):
        rng = np.random.default_rng(0)
        for _ in range(25):
            ch = tuple(douban_u.candidates[l][rng.integers(len(douban_u.candidates[l]))] for l in douban_u.links)
            mg = MetaGraph(4, "U", ch)
            assert parse_meta_graph(mg.dumps(), spec=douban_u) == mg
            assert parse_meta_graph(json.loads(mg.dumps())) == mg

    def test_links_sorted_in_json(self):
        obj = MetaGraph(2, "A", ("C-P", EMPTY, "P-A")).to_json()
        assert [(e["k"], e["i"]) for e in obj["links"]] == [(1, 0), (2, 0), (2, 1)]

    def test_parse_errors(self, douban_u):
        base = MetaGraph(2, "A", ("C-P", EMPTY, "P-A")).to_json()
        missing = dict(base, links=[e for e in base["links"] if (e["k"], e["i"]) != (2, 0)])
        with pytest.raises(MetaGraphError, match=r"\(2, 0\)"):
            parse_meta_graph(missing)
        bad_o = dict(base, links=[dict(e, choice="O") if (e["k"], e["i"]) == (2, 1) else e for e in base["links"]])
        with pytest.raises(MetaGraphError, match="not allowed"):
            parse_meta_graph(bad_o)
        with pytest.raises(MetaGraphError, match="unknown edge type"):
            parse_meta_graph(base, registry=EdgeTypeRegistry([("P-A", "P", "A")]))
        with pytest.raises(MetaGraphError, match="not valid JSON"):
            parse_meta_graph("{")
        with pytest.raises(MetaGraphError):
            parse_meta_graph({"K": 2})

    def test_out_of_candidate_choice(self, douban_u):
        ch = [douban_u.candidates[l][0] for l in douban_u.links]
        ch[-1] = "U-M"  # does not target U
        with pytest.raises(MetaGraphError, match="not a candidate"):
            MetaGraph(4, "U", tuple(ch)).validate(douban_u)
        with pytest.raises(MetaGraphError, match="does not match"):
            MetaGraph(3, "U", ch[:6]).validate(douban_u)


class TestDot:
    def test_single_edge(self):
        # every link that admits Empty takes it
        mg = MetaGraph(3, "A", ("C-P", EMPTY, "P-C", EMPTY, EMPTY, "P-A"))
        dot = export_dot(mg)
        assert dot.count("->") == 3
        lone = MetaGraph(1, "A", ("P-A",))
        assert export_dot(lone).count("->") == 1
        assert 'H0 -> H1 [label="P-A"]' in export_dot(lone)

    def test_in_degree_two_and_determinism(self):
        mg = MetaGraph(4, "U", ("I", "M-U", "U-U", EMPTY, "I", "U-M", "G-U", EMPTY, "I", "M-U"))
        dot = export_dot(mg)
        assert dot == export_dot(mg)
        heads = [line.split("->")[1].split()[0] for line in dot.splitlines() if "->" in line]
        assert heads.count("H3") == 2 and heads.count("H4") == 3
        assert dot.startswith('digraph "metagraph_U" {')
        assert all(f"H{k} [" in dot for k in range(5))
        assert 'label="I"' in dot

    def test_registry_labels(self, douban):
        mg = MetaGraph(1, "U", ("G-U",))
        assert "G-U (G->U)" in export_dot(mg, douban[0].registry)
