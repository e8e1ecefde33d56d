import itertools
import random
from collections import Counter

import pytest

from succinct_kg.errors import UnsupportedFeatureError
from succinct_kg.executor import run_query
from succinct_kg.litemat import OntologyGraph
from succinct_kg.optimizer import (SO, SS, Statistics, build_query_graph, get_most_selective,
                                   order_tps, plan_query, shape_rank)
from succinct_kg.parser import parse_ntriples, parse_query
from succinct_kg.store import KnowledgeBase
from succinct_kg.terms import RDF_TYPE

from oracle import random_graph, random_ontology, random_query

T = f"<{RDF_TYPE}>"

CHAIN_QUERY = """SELECT * WHERE {
  ?z a <C1> .
  ?x a <C2> .
  ?y a <C3> .
  ?z <p4> ?v .
  ?v <p5> ?w .
  ?w <p6> ?x .
  ?x <p7> ?y .
}"""


def chain_kb():
    lines = []
    for i in range(6):
        lines.append(f"<z{i}> {T} <C1> .")
    for i in range(2):
        lines.append(f"<x{i}> {T} <C2> .")
    for i in range(4):
        lines.append(f"<y{i}> {T} <C3> .")
    lines += ["<z0> <p4> <v0> .", "<v0> <p5> <w0> .", "<w0> <p6> <x0> .",
              "<x0> <p7> <y0> .", "<z1> <p4> <v1> ."]
    return KnowledgeBase.from_triples(parse_ntriples("\n".join(lines)))


class TestChainOrder:
    kb = chain_kb()
    q = parse_query(CHAIN_QUERY)

    def test_graph(self):
        g = build_query_graph(self.q)
        assert len(g.patterns) == 7
        assert [tp.is_type for tp in g.patterns] == [True] * 3 + [False] * 4
        assert g.label(1, 6) == SS      # tp2 / tp7 share ?x as subject
        assert g.label(1, 5) == SO      # tp6's object is tp2's subject

    def test_order(self):
        stats = Statistics(self.kb)
        assert stats.concept_count("C2") < stats.concept_count("C1")
        plan = plan_query(self.q, self.kb)
        assert [i + 1 for i in plan.order] == [2, 7, 3, 6, 5, 4, 1]

    def test_answers_match_any_order(self):
        base = Counter(run_query(self.q, self.kb).rows)
        assert sum(base.values()) == 1
        for order in ([0, 3, 4, 5, 6, 1, 2], [6, 1, 2, 5, 4, 3, 0]):
            assert Counter(run_query(self.q, self.kb, order=order).rows) == base


def test_single_tp():
    kb = chain_kb()
    plan = plan_query(parse_query("SELECT * WHERE { ?a <p4> ?b }"), kb)
    assert plan.order == [0] and plan.steps[0].strategy == "scan"


def test_type_constant_subject_first():
    kb = chain_kb()
    q = parse_query("SELECT * WHERE { ?s <p4> ?o . <z0> a ?o }")
    assert plan_query(q, kb).order == [1, 0]


def test_shape_ranks():
    q = parse_query("SELECT * WHERE { <s> a ?o . ?s a <C> . <s> <p> ?o . ?s <p> <o> . "
                    "?s <p> ?o . ?s ?p <o> }")
    assert [shape_rank(tp) for tp in q.patterns] == [0, 1, 2, 3, 4, 5]


def test_ss_preferred_over_so():
    kb = chain_kb()
    q = parse_query("SELECT * WHERE { ?x a <C2> . ?w <p6> ?x . ?x <p7> ?y }")
    g = build_query_graph(q)
    est = [1.0, 5.0, 5.0]
    assert get_most_selective(g, [1, 2], [0], est) == 2


def test_statistics_dominance_and_ties():
    q = parse_query("SELECT * WHERE { ?x <a> ?y . ?x <b> ?z . ?x <c> ?w }")
    g = build_query_graph(q)
    assert get_most_selective(g, [1, 2], [0], [1, 1000, 10]) == 2
    assert get_most_selective(g, [1, 2], [0], [1, 7, 7]) == 1
    assert order_tps(g, [5, 5, 5]) == [0, 1, 2]


def test_edges_and_disconnected():
    g = build_query_graph(parse_query("SELECT * WHERE { ?x <a> ?y . ?x <b> ?z }"))
    assert g.edges == {(0, 1): SS}
    g = build_query_graph(parse_query("SELECT * WHERE { ?x <a> ?y . ?y <b> ?z }"))
    assert g.edges == {(0, 1): SO}
    with pytest.raises(UnsupportedFeatureError):
        build_query_graph(parse_query("SELECT * WHERE { ?x <a> ?y . ?u <b> ?v }"))


class TestReasoningRewrite:
    def kb(self):
        q = "http://qudt.org/schema/qudt#"
        g = OntologyGraph()
        g.add_subclass(q + "PressureOrStressUnit", q + "PressureUnit")
        g.add_subclass(q + "PressureUnit", q + "Unit")
        g.add_subproperty("hasChild", "hasRelative")
        data = f"<u1> {T} <{q}PressureOrStressUnit> .\n<a> <hasChild> <b> .\n"
        return q, KnowledgeBase.from_triples(parse_ntriples(data), g)

    def test_concept_interval(self):
        q, kb = self.kb()
        query = parse_query(f"SELECT ?u WHERE {{ ?u a <{q}PressureUnit> }}")
        plan = plan_query(query, kb, reasoning=True)
        (iv,) = plan.steps[0].concept_intervals
        for c in ("PressureUnit", "PressureOrStressUnit"):
            assert kb.concepts.locate(q + c).id in iv
        assert plan.steps[0].constraint.matches(kb.concepts.locate(q + "PressureOrStressUnit").id)
        leaf = plan_query(parse_query(f"SELECT ?u WHERE {{ ?u a <{q}PressureOrStressUnit> }}"),
                          kb, reasoning=True)
        assert leaf.steps[0].concept_intervals[0].width == 1

    def test_property_interval(self):
        q, kb = self.kb()
        plan = plan_query(parse_query("SELECT * WHERE { ?a <hasRelative> ?b }"), kb, True)
        (iv,) = plan.steps[0].property_intervals
        assert kb.properties.locate("hasChild").id in iv

    def test_off_is_identity(self):
        q, kb = self.kb()
        plan = plan_query(parse_query(f"SELECT ?u WHERE {{ ?u a <{q}PressureUnit> }}"), kb)
        assert plan.steps[0].concept_intervals is None
        assert plan.steps[0].property_intervals is None

    def test_reasoning_statistics_aggregate(self):
        q, kb = self.kb()
        assert Statistics(kb).concept_count(q + "Unit") == 0
        assert Statistics(kb, True).concept_count(q + "Unit") == 1


def connected_orders(g, limit=50):
    n = len(g.patterns)
    out = []
    for perm in itertools.permutations(range(n)):
        if all(any(g.label(perm[k], j) for j in perm[:k]) for k in range(1, n)):
            out.append(list(perm))
            if len(out) >= limit:
                break
    return out


@pytest.mark.parametrize("seed", range(15))
def test_plan_properties(seed):
    rng = random.Random(seed)
    g_onto, cs, ps, ds = random_ontology(rng)
    triples = random_graph(rng, 150, 15, cs, ps, ds)
    kb = KnowledgeBase.from_triples(triples, g_onto)
    q = random_query(rng, triples, max_tps=6)
    plan = plan_query(q, kb)
    order = plan.order
    assert sorted(order) == list(range(len(q.patterns)))
    g = build_query_graph(q)
    for k in range(1, len(order)):
        assert any(g.label(order[k], j) for j in order[:k])
    assert plan_query(q, kb).order == order
    want = Counter(run_query(q, kb).rows)
    orders = connected_orders(g)
    for alt in random.Random(seed).sample(orders, min(3, len(orders))):
        assert Counter(run_query(q, kb, order=alt).rows) == want


def test_explain_text():
    plan = plan_query(parse_query(CHAIN_QUERY), chain_kb())
    text = plan.explain()
    assert text.splitlines()[1].lstrip().startswith("1. tp2")
    assert "access=type(?s,C)" in text
