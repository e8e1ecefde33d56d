import random
from collections import Counter

import pytest
from hypothesis import given, settings, strategies as st

from succinct_kg.executor import (INST, LIT, BindingTable, Evaluator, ExecStats, RangeFilter,
                                  apply_filter, decode, execute, merge_join, nested_loop_join,
                                  run_query, scan, tag)
from succinct_kg.litemat import IdInterval
from succinct_kg.optimizer import plan_query
from succinct_kg.parser import Compare, Or, TriplePattern, Var, parse_ntriples, parse_query
from succinct_kg.store import KnowledgeBase
from succinct_kg.terms import IRI, Literal

from oracle import match, materialize, random_graph, random_ontology, random_query

TOY = """<s1> <p1> <o1> .
<s2> <p1> <o1> .
<s4> <p1> <o2> .
<s1> <p2> <o3> .
<s2> <p2> <o4> .
<s3> <p2> <o1> .
<s1> <v> "3.5" .
"""


@pytest.fixture(scope="module")
def toy():
    return KnowledgeBase.from_triples(parse_ntriples(TOY))


def names(rows):
    return sorted(tuple(t.value if isinstance(t, IRI) else t for t in r) for r in rows)


def test_binding_propagation(toy):
    q = parse_query("SELECT ?s ?o WHERE { ?s <p1> <o1> . ?s <p2> ?o }")
    res = run_query(q, toy)
    first = res.stats.steps[0]
    assert first[1] == 2                      # ?s : {s1, s2}
    assert res.plan.steps[1].strategy == "merge"
    assert names(res.rows) == [("s1", "o3"), ("s2", "o4")]


def test_star_merge(toy):
    q = parse_query("SELECT ?s ?x WHERE { ?s <p1> ?x . ?s <p2> ?y }")
    res = run_query(q, toy)
    assert names(res.rows) == [("s1", "o1"), ("s2", "o1")]


def test_unsatisfiable(toy):
    q = parse_query("SELECT * WHERE { ?s <p1> <nowhere> . ?s <p2> ?o }")
    plan = plan_query(q, toy)
    table = execute(plan, toy)
    assert table.rows == [] and set(table.columns) == {"s", "o"}
    assert run_query(q, toy).rows == []


def test_decode(toy):
    q = parse_query('SELECT ?s ?v WHERE { ?s <v> ?v }')
    (row,) = run_query(q, toy).rows
    assert row == (IRI("s1"), Literal("3.5"))
    assert row[1].lexical == "3.5"
    empty = BindingTable(["s"], [])
    assert decode(empty, toy) == []


def test_m1_shape_random_store():
    rng = random.Random(4)
    triples = random_graph(rng, 1000, 60)
    kb = KnowledgeBase.from_triples(triples)
    q = parse_query("PREFIX ex: <http://ex.org/> "
                    "SELECT ?X ?Y ?Z WHERE { ?X ex:p0 ?Z . ?X ex:d0 ?Y . }")
    assert Counter(run_query(q, kb).rows) == match(q, triples)


class TestJoins:
    def table(self, keys, extra="a"):
        return BindingTable(["k", extra], [(k, i) for i, k in enumerate(keys)], "k")

    def test_disjoint(self):
        out = merge_join(self.table([1, 2, 3]), self.table([4, 5], "b"), "k")
        assert out.rows == []

    def test_duplicates_cross(self):
        out = merge_join(self.table([1, 2, 2, 2]), self.table([2, 2, 5], "b"), "k")
        assert len(out) == 6
        assert out.columns == ["k", "a", "b"]

    def test_unsorted_rejected(self):
        with pytest.raises(AssertionError):
            merge_join(BindingTable(["k"], [(2,), (1,)], None), self.table([1]), "k")

    def test_nested_loop_basics(self, toy):
        ev = Evaluator(toy)
        tp = TriplePattern(Var("s"), IRI("p2"), Var("o"))
        empty = BindingTable(["s"], [], "s")
        assert nested_loop_join(ev, empty, tp).rows == []
        s1 = tag(toy.instances.locate("s1"), INST)
        one = nested_loop_join(ev, BindingTable(["s"], [(s1,)]), tp)
        direct = scan(ev, TriplePattern(IRI("s1"), IRI("p2"), Var("o")))
        assert [r[1:] for r in one.rows] == direct.rows


def random_join_case(rng, kb, ev, props):
    p = rng.choice(props)
    tp = TriplePattern(Var("s"), IRI(p), Var("o"))
    subjects = list(range(1, kb.instances.max_id + 2))
    keys = sorted(rng.choice(subjects) for _ in range(rng.randint(0, 30)))
    left = BindingTable(["s", "x"], [(tag(k, INST), rng.randint(0, 3)) for k in keys], "s")
    nl = nested_loop_join(ev, left, tp)
    mj = merge_join(left, scan(ev, tp), "s")
    return nl, mj


def test_merge_equals_nested_loop():
    for seed in range(10):
        rng = random.Random(seed)
        triples = random_graph(rng, 300, 20)
        kb = KnowledgeBase.from_triples(triples)
        ev = Evaluator(kb)
        props = [p for p in kb.properties.forward if "ex.org" in p]
        for _ in range(20):
            nl, mj = random_join_case(rng, kb, ev, props)
            assert nl.columns == mj.columns
            assert Counter(nl.rows) == Counter(mj.rows)


class TestFilters:
    def test_interval(self):
        t = BindingTable(["c"], [(tag(i, 1),) for i in (20, 24, 25, 30)])
        ev = Evaluator(KnowledgeBase.from_triples([]))
        out = apply_filter(t, RangeFilter("c", (IdInterval(24, 28),)), ev)
        assert [r[0] >> 2 for r in out.rows] == [24, 25]

    def kb(self):
        text = '<a> <v> "2.5" .\n<b> <v> "3.7" .\n<c> <v> "5.0" .\n<d> <v> "n/a" .\n'
        kb = KnowledgeBase.from_triples(parse_ntriples(text))
        return kb, Evaluator(kb)

    def table(self, kb):
        return BindingTable(["v"], [(tag(i, LIT),) for i in range(len(kb.literals))])

    def test_numeric_or(self):
        kb, ev = self.kb()
        f = Or((Compare("<", Var("v"), Literal("3.00")), Compare(">", Var("v"), Literal("4.50"))))
        out = apply_filter(self.table(kb), f, ev)
        assert [ev.term(r[0]).lexical for r in out.rows] == ["2.5", "5.0"]
        assert out.skipped == 2   # "n/a" fails both comparisons

    def test_tautology(self):
        kb, ev = self.kb()
        f = Or((Compare("<", Var("v"), Literal("10")), Compare(">=", Var("v"), Literal("10")),
                Compare("=", Var("v"), Literal("n/a"))))
        assert len(apply_filter(self.table(kb), f, ev)) == 4

    def test_query_level(self):
        kb, _ = self.kb()
        q = parse_query("SELECT ?s WHERE { ?s <v> ?v FILTER (?v < 3.00 || ?v > 4.50) }")
        res = run_query(q, kb)
        assert names(res.rows) == [("a",), ("c",)]
        assert res.stats.skipped_rows == 2


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_oracle_equivalence(seed):
    rng = random.Random(seed)
    g, cs, ps, ds = random_ontology(rng)
    triples = random_graph(rng, rng.randint(1, 250), 20, cs, ps, ds)
    kb = KnowledgeBase.from_triples(triples, g)
    q = random_query(rng, triples)
    assert Counter(run_query(q, kb).rows) == match(q, triples)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_reasoning_equivalence(seed):
    rng = random.Random(seed)
    g, cs, ps, ds = random_ontology(rng, multi=0.15)
    triples = random_graph(rng, rng.randint(1, 150), 15, cs, ps, ds)
    kb = KnowledgeBase.from_triples(triples, g)
    q = random_query(rng, triples, max_tps=5).with_reasoning()
    on = Counter(run_query(q, kb).rows)
    assert on == match(q, materialize(g, triples))
    off = Counter(run_query(q.with_reasoning(False), kb).rows)
    assert set(off) <= set(on)


def test_variable_predicate_and_repeated_var(toy):
    q = parse_query("SELECT ?p ?o WHERE { <s1> ?p ?o }")
    got = Counter((p.value, o) for p, o in run_query(q, toy).rows)
    assert got == Counter([("p1", IRI("o1")), ("p2", IRI("o3")), ("v", Literal("3.5"))])
    kb = KnowledgeBase.from_triples(parse_ntriples("<a> <knows> <a> .\n<a> <knows> <b> ."))
    q = parse_query("SELECT ?x WHERE { ?x <knows> ?x }")
    assert names(run_query(q, kb).rows) == [("a",)]


def test_exec_stats_records_steps(toy):
    stats = ExecStats()
    execute(plan_query(parse_query("SELECT * WHERE { ?s <p1> ?o . ?s <p2> ?z }"), toy), toy,
            stats)
    assert len(stats.steps) == 2
