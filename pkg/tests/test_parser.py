import pytest
from hypothesis import given, settings, strategies as st

from succinct_kg.errors import ParseError, UnsupportedFeatureError
from succinct_kg.parser import (And, Compare, Or, Var, format_ntriples, format_query,
                                parse_ntriples, parse_ontology, parse_query)
from succinct_kg.terms import IRI, RDF_TYPE, RDFS, BNode, Literal, XSD_INTEGER

LUBM = "PREFIX lubm: <http://swat.cse.lehigh.edu/onto/univ-bench.owl#>\n"


class TestNTriples:
    def test_object_triple(self):
        (t,) = parse_ntriples("<a> <p> <b> .")
        assert t.subject == IRI("a") and t.predicate == IRI("p") and t.object == IRI("b")
        assert not t.is_datatype

    def test_datatype_triple(self):
        (t,) = parse_ntriples('<a> <p> "3.5" .')
        assert t.is_datatype and t.object.lexical == "3.5"

    def test_missing_dot(self):
        with pytest.raises(ParseError) as exc:
            parse_ntriples("<a> <p> <b> .\n<a> <p> <c>\n")
        assert exc.value.line == 2

    def test_comments_blank_nodes_escapes(self):
        text = ('# header\n\n_:b1 <p> "a\\"b\\n\\u00e9"@en .  # trailing\n'
                '<x> <q> "7"^^<http://www.w3.org/2001/XMLSchema#integer> .\n')
        a, b = parse_ntriples(text)
        assert a.subject == BNode("b1")
        assert a.object == Literal('a"b\né', lang="en")
        assert b.object == Literal("7", datatype=XSD_INTEGER)

    def test_predicate_must_be_iri(self):
        with pytest.raises(ParseError):
            parse_ntriples('<a> "p" <b> .')
        with pytest.raises(ParseError):
            parse_ntriples("<a> _:p <b> .")

    def test_round_trip(self):
        text = ('<a> <p> <b> .\n_:x <p> "q\\\\uote \\"\\t" .\n'
                '<a> <p> "1"^^<http://www.w3.org/2001/XMLSchema#integer> .\n<a> <p> "hi"@en-GB .\n')
        ts = parse_ntriples(text)
        assert parse_ntriples(format_ntriples(ts)) == ts


class TestOntology:
    def test_subclass_edge(self):
        g = parse_ontology(f"<C> <{RDFS}subClassOf> <B> .")
        assert g.concept_parents["C"] == {"B"}

    def test_no_rhodf(self):
        g = parse_ontology("<a> <p> <b> .\n<c> <q> <d> .\n")
        assert g.is_empty() and g.ignored == 2

    def test_qudt_chain(self):
        q = "http://qudt.org/schema/qudt#"
        text = (f"<{q}AmountOfSubstanceUnit> <{RDFS}subClassOf> <{q}Chemistry> .\n"
                f"<{q}Chemistry> <{RDFS}subClassOf> <{q}ScienceUnit> .\n")
        g = parse_ontology(text)
        edges = {(c, p) for c, ps in g.concept_parents.items() for p in ps}
        assert edges == {(q + "AmountOfSubstanceUnit", q + "Chemistry"),
                         (q + "Chemistry", q + "ScienceUnit")}

    def test_domain_range_subproperty(self):
        text = (f"<hosts> <{RDFS}domain> <Platform> .\n<hosts> <{RDFS}range> <Sensor> .\n"
                f"<mounts> <{RDFS}subPropertyOf> <hosts> .\n")
        g = parse_ontology(text)
        assert g.domain_of["hosts"] == {"Platform"}
        assert g.range_of["hosts"] == {"Sensor"}
        assert g.property_parents["mounts"] == {"hosts"}

    def test_syntax_error(self):
        with pytest.raises(ParseError):
            parse_ontology(f"<C> <{RDFS}subClassOf> <B>")


class TestQuery:
    def test_s11(self):
        q = parse_query(LUBM + "SELECT ?X ?Y ?Z WHERE { ?X lubm:worksFor ?Z }")
        assert len(q.patterns) == 1
        tp = q.patterns[0]
        assert isinstance(tp.s, Var) and isinstance(tp.o, Var) and isinstance(tp.p, IRI)
        assert q.output_variables() == ["X", "Y", "Z"]

    def test_m2(self):
        q = parse_query(LUBM + """SELECT ?X ?Y ?Z WHERE { ?X lubm:memberOf ?Z .
             ?X rdf:type lubm:GraduateStudent .
             ?X lubm:undergraduateDegreeFrom ?Y .}""")
        assert len(q.patterns) == 3
        assert [tp.is_type for tp in q.patterns] == [False, True, False]

    def test_a_keyword_and_separators(self):
        q = parse_query(LUBM + "SELECT * WHERE { ?x a lubm:Person ; lubm:name ?n , ?m . }")
        assert q.patterns[0].p == IRI(RDF_TYPE)
        assert len(q.patterns) == 3 and q.projection is None
        assert q.variables() == ["x", "n", "m"]

    def test_bind_unsupported(self):
        with pytest.raises(UnsupportedFeatureError) as exc:
            parse_query("SELECT ?x WHERE { ?x <p> ?y . BIND(?y AS ?z) }")
        assert "BIND" in str(exc.value)

    @pytest.mark.parametrize("kw", ["OPTIONAL { ?x <q> ?z }", "FILTER regex(?y, \"a\")"])
    def test_other_unsupported(self, kw):
        with pytest.raises(UnsupportedFeatureError):
            parse_query(f"SELECT ?x WHERE {{ ?x <p> ?y . {kw} }}")

    def test_union_unsupported(self):
        with pytest.raises(UnsupportedFeatureError):
            parse_query("SELECT ?x WHERE { { ?x <p> ?y } UNION { ?x <q> ?y } }")

    def test_unsupported_shapes(self):
        with pytest.raises(UnsupportedFeatureError):
            parse_query("SELECT * WHERE { <a> <p> <b> }")
        with pytest.raises(UnsupportedFeatureError):
            parse_query("SELECT * WHERE { ?s ?p ?o }")

    def test_filter(self):
        q = parse_query("SELECT ?x WHERE { ?x <v> ?v . FILTER (?v >= 2.5 && ?v < 3 || ?v = 9) }")
        (f,) = q.filters
        assert isinstance(f, Or)
        assert isinstance(f.args[0], And)
        c = f.args[0].args[0]
        assert isinstance(c, Compare) and c.op == ">=" and c.left == Var("v")
        assert c.right.lexical == "2.5"

    def test_errors_are_positioned(self):
        with pytest.raises(ParseError) as exc:
            parse_query("SELECT ?x WHERE {\n ?x <p> \n}")
        assert exc.value.line is not None
        with pytest.raises(ParseError):
            parse_query("SELECT ?x WHERE { ?x foo:bar ?y }")
        with pytest.raises(ParseError):
            parse_query("SELECT ?x WHERE { ?x <p> ?y ")

    def test_distinct_and_reasoning_flag(self):
        q = parse_query("SELECT DISTINCT ?x WHERE { ?x <p> ?y }")
        assert q.distinct and not q.reasoning
        assert q.with_reasoning().reasoning

    def test_deep_filter_rejected(self):
        text = "SELECT ?x WHERE { ?x <p> ?y FILTER (" + "(" * 500 + "?y < 1" + ")" * 500 + ") }"
        with pytest.raises((ParseError, UnsupportedFeatureError)):
            parse_query(text)


QUERIES = [
    LUBM + "SELECT ?X ?Y ?Z WHERE { ?X lubm:worksFor ?Z }",
    "SELECT DISTINCT ?x ?v WHERE { ?x a <C> . ?x <v> ?v FILTER (!(?v < 3) || ?v != \"a\") }",
    "SELECT * WHERE { <s> ?p ?o . ?o <q> \"x\"@en }",
    "PREFIX ex: <http://ex.org/> SELECT ?s WHERE { ?s ex:p ex:o ; ex:q _:b1 . }",
]


@pytest.mark.parametrize("text", QUERIES)
def test_query_round_trip(text):
    q = parse_query(text)
    again = parse_query(format_query(q))
    assert again == q
    assert parse_query(format_query(again)) == again


@settings(max_examples=300, deadline=None)
@given(st.text(alphabet=st.sampled_from(list("SELECT WHERE{}?x<>.;,\"a()&|!=<>0123FILTER:p_\n")),
               max_size=80))
def test_query_fuzz(text):
    try:
        parse_query(text)
    except (ParseError, UnsupportedFeatureError):
        pass


@settings(max_examples=200, deadline=None)
@given(st.binary(max_size=120))
def test_ntriples_fuzz(data):
    text = data.decode("utf-8", errors="replace")
    try:
        parse_ntriples(text)
    except ParseError as exc:
        assert exc.line is not None
