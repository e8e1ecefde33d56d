"""Parsers for N-Triples data, rho-df ontologies and the SPARQL BGP subset.

Everything here is a pure function over text.  Errors are raised as
:class:`ParseError` (with a 1-based line and column) or
:class:`UnsupportedFeatureError` naming the rejected construct.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

from .errors import ParseError, UnsupportedFeatureError
from .litemat import OntologyGraph
from .terms import (BNode, IRI, Literal, RDF, RDF_TYPE, RDFS, RDFS_DOMAIN, RDFS_RANGE,
                    RDFS_SUBCLASSOF, RDFS_SUBPROPERTYOF, OWL, XSD, XSD_DECIMAL, XSD_DOUBLE,
                    XSD_INTEGER, escape_string)

_MAX_FILTER_DEPTH = 100

log = logging.getLogger(__name__)

# ---------------------------------------------------------------------------
# N-Triples
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class RawTriple:
    subject: IRI | BNode
    predicate: IRI
    object: IRI | BNode | Literal

    @property
    def is_datatype(self) -> bool:
        return isinstance(self.object, Literal)

    def n3(self) -> str:
        return f"{self.subject.n3()} {self.predicate.n3()} {self.object.n3()} ."


_IRIREF = re.compile(r'<([^<>"{}|^`\\\x00-\x20]|\\u[0-9A-Fa-f]{4}|\\U[0-9A-Fa-f]{8})*>')
_BNODE = re.compile(r"_:[A-Za-z0-9_À-￿]([A-Za-z0-9_.\-·À-￿]*[A-Za-z0-9_\-·À-￿])?")
_STRING = re.compile(r'"((?:[^"\\\n\r]|\\.)*)"')
_LANGTAG = re.compile(r"@[a-zA-Z]+(-[a-zA-Z0-9]+)*")
_WS = re.compile(r"[ \t]*")
_UCHAR = re.compile(r"\\u([0-9A-Fa-f]{4})|\\U([0-9A-Fa-f]{8})")
_ECHAR = {"t": "\t", "b": "\b", "n": "\n", "r": "\r", "f": "\f", '"': '"', "'": "'", "\\": "\\"}


def _unescape_iri(raw: str) -> str:
    def repl(m):
        return _codepoint(m.group(1) or m.group(2))
    return _UCHAR.sub(repl, raw)


def _codepoint(hexdigits: str) -> str:
    cp = int(hexdigits, 16)
    if cp > 0x10FFFF or 0xD800 <= cp <= 0xDFFF:
        raise ValueError(f"invalid code point U+{cp:X}")
    return chr(cp)


def unescape_string(raw: str) -> str:
    out = []
    i = 0
    n = len(raw)
    while i < n:
        ch = raw[i]
        if ch != "\\":
            out.append(ch)
            i += 1
            continue
        if i + 1 >= n:
            raise ValueError("dangling backslash")
        nxt = raw[i + 1]
        if nxt in _ECHAR:
            out.append(_ECHAR[nxt])
            i += 2
        elif nxt == "u" and re.fullmatch(r"[0-9A-Fa-f]{4}", raw[i + 2:i + 6]):
            out.append(_codepoint(raw[i + 2:i + 6]))
            i += 6
        elif nxt == "U" and re.fullmatch(r"[0-9A-Fa-f]{8}", raw[i + 2:i + 10]):
            out.append(_codepoint(raw[i + 2:i + 10]))
            i += 10
        else:
            raise ValueError(f"invalid escape \\{nxt}")
    return "".join(out)


class _LineScanner:
    def __init__(self, line: str, lineno: int, source):
        self.line = line
        self.pos = 0
        self.lineno = lineno
        self.source = source

    def error(self, msg):
        raise ParseError(msg, self.lineno, self.pos + 1, self.source)

    def skip_ws(self):
        self.pos = _WS.match(self.line, self.pos).end()

    def iri(self) -> IRI:
        m = _IRIREF.match(self.line, self.pos)
        if not m:
            self.error("expected IRI")
        try:
            value = _unescape_iri(m.group(0)[1:-1])
        except ValueError as exc:
            self.error(str(exc))
        self.pos = m.end()
        return IRI(value)

    def subject(self):
        ch = self.line[self.pos:self.pos + 1]
        if ch == "<":
            return self.iri()
        if ch == "_":
            return self.bnode()
        self.error("expected IRI or blank node as subject")

    def bnode(self) -> BNode:
        m = _BNODE.match(self.line, self.pos)
        if not m:
            self.error("malformed blank node label")
        self.pos = m.end()
        return BNode(m.group(0)[2:])

    def object(self):
        ch = self.line[self.pos:self.pos + 1]
        if ch == "<":
            return self.iri()
        if ch == "_":
            return self.bnode()
        if ch == '"':
            return self.literal()
        self.error("expected IRI, blank node or literal as object")

    def literal(self) -> Literal:
        m = _STRING.match(self.line, self.pos)
        if not m:
            self.error("unterminated string literal")
        try:
            lexical = unescape_string(m.group(1))
        except ValueError as exc:
            self.error(str(exc))
        self.pos = m.end()
        if self.line.startswith("^^", self.pos):
            self.pos += 2
            return Literal(lexical, datatype=self.iri().value)
        if self.line.startswith("@", self.pos):
            lm = _LANGTAG.match(self.line, self.pos)
            if not lm:
                self.error("malformed language tag")
            self.pos = lm.end()
            return Literal(lexical, lang=lm.group(0)[1:].lower())
        return Literal(lexical)


def iter_ntriples(text, source=None):
    """Yield ``(lineno, RawTriple)`` for every statement in ``text``."""
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"invalid UTF-8: {exc.reason}", 1, None, source) from None
    for lineno, line in enumerate(text.splitlines(), 1):
        sc = _LineScanner(line, lineno, source)
        sc.skip_ws()
        if sc.pos == len(line) or line[sc.pos] == "#":
            continue
        s = sc.subject()
        sc.skip_ws()
        p = sc.iri()
        sc.skip_ws()
        o = sc.object()
        sc.skip_ws()
        if line[sc.pos:sc.pos + 1] != ".":
            sc.error("expected '.' terminating the triple")
        sc.pos += 1
        sc.skip_ws()
        if sc.pos != len(line) and line[sc.pos] != "#":
            sc.error("unexpected content after '.'")
        yield lineno, RawTriple(s, p, o)


def parse_ntriples(text, source=None) -> list[RawTriple]:
    return [t for _, t in iter_ntriples(text, source)]


def format_ntriples(triples) -> str:
    return "".join(t.n3() + "\n" for t in triples)


# ---------------------------------------------------------------------------
# Ontology
# ---------------------------------------------------------------------------

_RHODF = {RDFS_SUBCLASSOF, RDFS_SUBPROPERTYOF, RDFS_DOMAIN, RDFS_RANGE}


def parse_ontology(text, source=None) -> OntologyGraph:
    """Keep the four rho-df statements; everything else is counted and skipped."""
    g = OntologyGraph()
    for lineno, t in iter_ntriples(text, source):
        p = t.predicate.value
        if p not in _RHODF or isinstance(t.object, Literal):
            g.ignored += 1
            continue
        child, parent = t.subject.key, t.object.key
        if p == RDFS_SUBCLASSOF:
            g.add_subclass(child, parent)
        elif p == RDFS_SUBPROPERTYOF:
            g.add_subproperty(child, parent)
        elif p == RDFS_DOMAIN:
            g.domain_of.setdefault(child, set()).add(parent)
        else:
            g.range_of.setdefault(child, set()).add(parent)
    if g.ignored:
        log.warning("ontology: ignored %d non rho-df statements", g.ignored)
    return g


# ---------------------------------------------------------------------------
# SPARQL subset
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Var:
    name: str

    def n3(self) -> str:
        return "?" + self.name


@dataclass(frozen=True, slots=True)
class TriplePattern:
    s: Var | IRI | BNode
    p: Var | IRI
    o: Var | IRI | BNode | Literal

    @property
    def is_type(self) -> bool:
        return isinstance(self.p, IRI) and self.p.value == RDF_TYPE

    def variables(self) -> list[str]:
        seen = []
        for t in (self.s, self.p, self.o):
            if isinstance(t, Var) and t.name not in seen:
                seen.append(t.name)
        return seen

    def n3(self) -> str:
        return f"{self.s.n3()} {self.p.n3()} {self.o.n3()} ."


COMPARISON_OPS = ("<", ">", "<=", ">=", "=", "!=")


@dataclass(frozen=True, slots=True)
class Compare:
    op: str
    left: Var | IRI | Literal
    right: Var | IRI | Literal

    def variables(self) -> set[str]:
        return {t.name for t in (self.left, self.right) if isinstance(t, Var)}

    def n3(self) -> str:
        return f"{self.left.n3()} {self.op} {self.right.n3()}"


@dataclass(frozen=True, slots=True)
class And:
    args: tuple

    def variables(self) -> set[str]:
        return set().union(*(a.variables() for a in self.args))

    def n3(self) -> str:
        return "(" + " && ".join(a.n3() for a in self.args) + ")"


@dataclass(frozen=True, slots=True)
class Or:
    args: tuple

    def variables(self) -> set[str]:
        return set().union(*(a.variables() for a in self.args))

    def n3(self) -> str:
        return "(" + " || ".join(a.n3() for a in self.args) + ")"


@dataclass(frozen=True, slots=True)
class Not:
    arg: object

    def variables(self) -> set[str]:
        return self.arg.variables()

    def n3(self) -> str:
        return "!(" + self.arg.n3() + ")"


@dataclass(frozen=True)
class Query:
    projection: tuple[Var, ...] | None  # None means SELECT *
    patterns: tuple[TriplePattern, ...]
    filters: tuple = ()
    distinct: bool = False
    reasoning: bool = False

    def variables(self) -> list[str]:
        seen = []
        for tp in self.patterns:
            for v in tp.variables():
                if v not in seen:
                    seen.append(v)
        return seen

    def output_variables(self) -> list[str]:
        if self.projection is None:
            return self.variables()
        return [v.name for v in self.projection]

    def with_reasoning(self, on: bool = True) -> "Query":
        return Query(self.projection, self.patterns, self.filters, self.distinct, on)


def format_query(q: Query) -> str:
    head = "SELECT "
    if q.distinct:
        head += "DISTINCT "
    head += "*" if q.projection is None else " ".join(v.n3() for v in q.projection)
    body = [f"  {tp.n3()}" for tp in q.patterns]
    body += [f"  FILTER ({f.n3()})" for f in q.filters]
    return head + " WHERE {\n" + "\n".join(body) + "\n}\n"


_UNSUPPORTED = {
    "BIND", "UNION", "OPTIONAL", "REGEX", "MINUS", "GRAPH", "SERVICE", "VALUES",
    "CONSTRUCT", "ASK", "DESCRIBE", "FROM", "ORDER", "GROUP", "HAVING", "LIMIT", "OFFSET",
    "EXISTS", "NOT", "STR", "LANG", "DATATYPE", "BOUND", "IF", "COALESCE", "IN", "INSERT",
    "DELETE", "LOAD", "CLEAR", "WITH", "REDUCED",
}

_KEYWORDS = {"SELECT", "WHERE", "PREFIX", "BASE", "DISTINCT", "FILTER", "TRUE", "FALSE"}

_TOKEN_SPEC = [
    ("WS", r"[ \t\r\n]+|#[^\n]*"),
    ("IRIREF", r'<(?:[^<>"{}|^`\\\x00-\x20]|\\u[0-9A-Fa-f]{4}|\\U[0-9A-Fa-f]{8})*>'),
    ("VAR", r"[?$][A-Za-z0-9_·À-￿]+"),
    ("STRING", r'"(?:[^"\\\n\r]|\\.)*"' + r"|'(?:[^'\\\n\r]|\\.)*'"),
    ("LANGTAG", r"@[a-zA-Z]+(?:-[a-zA-Z0-9]+)*"),
    ("DTYPE", r"\^\^"),
    ("BNODE", r"_:[A-Za-z0-9_][A-Za-z0-9_.\-]*"),
    ("NUMBER", r"[+-]?(?:\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+[eE][+-]?\d+|\d+)"),
    ("PNAME", r"(?:[A-Za-zÀ-￿][A-Za-z0-9_.\-·À-￿]*)?:"
              r"(?:[A-Za-z0-9_:À-￿](?:[A-Za-z0-9_.\-:·À-￿]*[A-Za-z0-9_\-:·À-￿])?)?"),
    ("OP", r"&&|\|\||<=|>=|!=|[<>=!]"),
    ("PUNCT", r"[{}().;,*]"),
    ("NAME", r"[A-Za-z_][A-Za-z0-9_]*"),
]
_TOKEN_RE = re.compile("|".join(f"(?P<{name}>{pat})" for name, pat in _TOKEN_SPEC))


@dataclass(slots=True)
class _Tok:
    kind: str
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    line, line_start = 1, 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        tok_text = m.group(0)
        if kind != "WS":
            toks.append(_Tok(kind, tok_text, line, pos - line_start + 1))
        nl = tok_text.count("\n")
        if nl:
            line += nl
            line_start = pos + tok_text.rfind("\n") + 1
        pos = m.end()
    toks.append(_Tok("EOF", "", line, pos - line_start + 1))
    return toks


_DEFAULT_PREFIXES = {"rdf": RDF, "rdfs": RDFS, "owl": OWL, "xsd": XSD}


@dataclass
class _QueryParser:
    toks: list
    i: int = 0
    prefixes: dict = field(default_factory=lambda: dict(_DEFAULT_PREFIXES))
    base: str = ""

    def peek(self) -> _Tok:
        return self.toks[self.i]

    def next(self) -> _Tok:
        tok = self.toks[self.i]
        if tok.kind != "EOF":
            self.i += 1
        return tok

    def error(self, msg, tok=None):
        tok = tok or self.peek()
        raise ParseError(msg, tok.line, tok.col)

    def keyword(self, tok) -> str | None:
        if tok.kind == "NAME":
            return tok.text.upper()
        return None

    def check_unsupported(self, tok):
        kw = self.keyword(tok)
        if kw in _UNSUPPORTED:
            raise UnsupportedFeatureError(kw, f"line {tok.line}")

    def expect_keyword(self, kw):
        tok = self.next()
        self.check_unsupported(tok)
        if self.keyword(tok) != kw:
            self.error(f"expected {kw}", tok)

    def expect(self, text):
        tok = self.next()
        if tok.text != text:
            self.check_unsupported(tok)
            self.error(f"expected {text!r}, found {tok.text or 'end of input'!r}", tok)
        return tok

    # -- grammar -------------------------------------------------------

    def query(self) -> Query:
        while self.keyword(self.peek()) in ("PREFIX", "BASE"):
            if self.keyword(self.next()) == "BASE":
                tok = self.next()
                if tok.kind != "IRIREF":
                    self.error("expected IRI after BASE", tok)
                self.base = self.iri_value(tok)
                continue
            tok = self.next()
            if tok.kind != "PNAME" or not tok.text.endswith(":") or tok.text.count(":") != 1:
                self.error("expected prefix name ending with ':'", tok)
            iri = self.next()
            if iri.kind != "IRIREF":
                self.error("expected IRI in PREFIX declaration", iri)
            self.prefixes[tok.text[:-1]] = self.iri_value(iri)
        self.expect_keyword("SELECT")
        distinct = False
        if self.keyword(self.peek()) == "DISTINCT":
            self.next()
            distinct = True
        self.check_unsupported(self.peek())
        projection: list[Var] | None = []
        if self.peek().text == "*":
            self.next()
            projection = None
        else:
            while self.peek().kind == "VAR":
                projection.append(Var(self.next().text[1:]))
            if not projection:
                self.error("expected projection variables or '*'")
        if self.keyword(self.peek()) == "WHERE":
            self.next()
        self.expect("{")
        patterns, filters = self.group()
        self.expect("}")
        tok = self.peek()
        if tok.kind != "EOF":
            self.check_unsupported(tok)
            self.error(f"unexpected {tok.text!r} after query body", tok)
        if not patterns:
            self.error("query has no triple patterns")
        if projection is not None:
            projection = tuple(dict.fromkeys(projection))
        return Query(projection, tuple(patterns), tuple(filters), distinct)

    def group(self):
        patterns: list[TriplePattern] = []
        filters = []
        while True:
            tok = self.peek()
            if tok.text == "}" or tok.kind == "EOF":
                return patterns, filters
            if tok.text == "{":
                raise UnsupportedFeatureError("nested group", f"line {tok.line}")
            kw = self.keyword(tok)
            if kw == "FILTER":
                self.next()
                filters.append(self.filter_body())
                if self.peek().text == ".":
                    self.next()
                continue
            self.check_unsupported(tok)
            subject = self.term(tok_pos="subject")
            self.property_list(subject, patterns)
            if self.peek().text == ".":
                self.next()
            elif self.peek().text != "}" and self.keyword(self.peek()) != "FILTER":
                self.check_unsupported(self.peek())
                self.error(f"expected '.' or '}}', found {self.peek().text or 'end of input'!r}")

    def property_list(self, subject, patterns):
        while True:
            tok = self.peek()
            if tok.kind == "NAME" and tok.text == "a":
                self.next()
                pred = IRI(RDF_TYPE)
            else:
                pred = self.term(tok_pos="predicate")
            while True:
                obj = self.term(tok_pos="object")
                patterns.append(self.make_pattern(subject, pred, obj, tok))
                if self.peek().text == ",":
                    self.next()
                    continue
                break
            if self.peek().text == ";":
                while self.peek().text == ";":
                    self.next()
                nxt = self.peek()
                if nxt.text in (".", "}") or self.keyword(nxt) == "FILTER":
                    return
                continue
            return

    def make_pattern(self, s, p, o, tok) -> TriplePattern:
        n_vars = sum(isinstance(t, Var) for t in (s, p, o))
        if n_vars == 0:
            raise UnsupportedFeatureError("fully constant triple pattern", f"line {tok.line}")
        if n_vars == 3:
            raise UnsupportedFeatureError("triple pattern with three variables", f"line {tok.line}")
        return TriplePattern(s, p, o)

    def term(self, tok_pos: str):
        tok = self.next()
        self.check_unsupported(tok)
        kind = tok.kind
        if kind == "VAR":
            return Var(tok.text[1:])
        if kind in ("IRIREF", "PNAME"):
            return IRI(self.iri_value(tok))
        if kind == "BNODE":
            if tok_pos == "predicate":
                self.error("blank node not allowed as predicate", tok)
            return BNode(tok.text[2:])
        if kind in ("STRING", "NUMBER") or self.keyword(tok) in ("TRUE", "FALSE"):
            if tok_pos != "object":
                self.error(f"literal not allowed as {tok_pos}", tok)
            return self.literal_rest(tok)
        if tok.text == "[" or tok.text == "(":
            raise UnsupportedFeatureError("blank node / collection syntax", f"line {tok.line}")
        self.error(f"expected {tok_pos}, found {tok.text or 'end of input'!r}", tok)

    def iri_value(self, tok) -> str:
        if tok.kind == "IRIREF":
            try:
                value = _unescape_iri(tok.text[1:-1])
            except ValueError as exc:
                self.error(str(exc), tok)
            if self.base and ":" not in value:
                value = self.base + value
            return value
        prefix, _, local = tok.text.partition(":")
        if prefix not in self.prefixes:
            self.error(f"undeclared prefix {prefix!r}", tok)
        return self.prefixes[prefix] + local

    def literal_rest(self, tok) -> Literal:
        if tok.kind == "NUMBER":
            text = tok.text
            if "e" in text.lower():
                return Literal(text, XSD_DOUBLE)
            if "." in text:
                return Literal(text, XSD_DECIMAL)
            return Literal(text, XSD_INTEGER)
        if tok.kind == "NAME":
            return Literal(tok.text.lower(), XSD + "boolean")
        try:
            lexical = unescape_string(tok.text[1:-1])
        except ValueError as exc:
            self.error(str(exc), tok)
        nxt = self.peek()
        if nxt.kind == "LANGTAG":
            self.next()
            return Literal(lexical, lang=nxt.text[1:].lower())
        if nxt.kind == "DTYPE":
            self.next()
            dt = self.next()
            if dt.kind not in ("IRIREF", "PNAME"):
                self.error("expected datatype IRI", dt)
            return Literal(lexical, datatype=self.iri_value(dt))
        return Literal(lexical)

    # -- filters -------------------------------------------------------

    def filter_body(self):
        tok = self.peek()
        self.check_unsupported(tok)
        if tok.text != "(":
            self.error("expected '(' after FILTER", tok)
        self.next()
        expr = self.or_expr()
        self.expect(")")
        return expr

    def or_expr(self, depth=0):
        args = [self.and_expr(depth)]
        while self.peek().text == "||":
            self.next()
            args.append(self.and_expr(depth))
        return args[0] if len(args) == 1 else Or(tuple(args))

    def and_expr(self, depth=0):
        args = [self.unary(depth)]
        while self.peek().text == "&&":
            self.next()
            args.append(self.unary(depth))
        return args[0] if len(args) == 1 else And(tuple(args))

    def unary(self, depth=0):
        if depth > _MAX_FILTER_DEPTH:
            self.error("filter expression nested too deeply")
        tok = self.peek()
        self.check_unsupported(tok)
        if tok.text == "!":
            self.next()
            return Not(self.unary(depth + 1))
        if tok.text == "(":
            self.next()
            expr = self.or_expr(depth + 1)
            self.expect(")")
            return expr
        left = self.operand()
        op = self.next()
        if op.text not in COMPARISON_OPS:
            self.check_unsupported(op)
            self.error(f"expected comparison operator, found {op.text or 'end of input'!r}", op)
        right = self.operand()
        return Compare(op.text, left, right)

    def operand(self):
        tok = self.next()
        self.check_unsupported(tok)
        if tok.kind == "VAR":
            return Var(tok.text[1:])
        if tok.kind in ("IRIREF", "PNAME"):
            return IRI(self.iri_value(tok))
        if tok.kind in ("STRING", "NUMBER") or self.keyword(tok) in ("TRUE", "FALSE"):
            return self.literal_rest(tok)
        if tok.kind == "NAME" and self.peek().text == "(":
            raise UnsupportedFeatureError(f"function {tok.text}", f"line {tok.line}")
        self.error(f"expected filter operand, found {tok.text or 'end of input'!r}", tok)


def parse_query(text) -> Query:
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"invalid UTF-8: {exc.reason}", 1, None) from None
    return _QueryParser(_tokenize(text)).query()
