"""RDF term values and well-known vocabulary IRIs."""

from __future__ import annotations

from dataclasses import dataclass

RDF = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
RDFS = "http://www.w3.org/2000/01/rdf-schema#"
OWL = "http://www.w3.org/2002/07/owl#"
XSD = "http://www.w3.org/2001/XMLSchema#"

RDF_TYPE = RDF + "type"
RDFS_SUBCLASSOF = RDFS + "subClassOf"
RDFS_SUBPROPERTYOF = RDFS + "subPropertyOf"
RDFS_DOMAIN = RDFS + "domain"
RDFS_RANGE = RDFS + "range"
OWL_THING = OWL + "Thing"
TOP_PROPERTY = OWL + "topObjectProperty"

XSD_INTEGER = XSD + "integer"
XSD_DECIMAL = XSD + "decimal"
XSD_DOUBLE = XSD + "double"
XSD_STRING = XSD + "string"


@dataclass(frozen=True, slots=True)
class IRI:
    value: str

    def n3(self) -> str:
        return "<" + _escape_iri(self.value) + ">"

    @property
    def key(self) -> str:
        return self.value


@dataclass(frozen=True, slots=True)
class BNode:
    label: str

    def n3(self) -> str:
        return "_:" + self.label

    @property
    def key(self) -> str:
        return "_:" + self.label


@dataclass(frozen=True, slots=True)
class Literal:
    lexical: str
    datatype: str | None = None
    lang: str | None = None

    def n3(self) -> str:
        out = '"' + escape_string(self.lexical) + '"'
        if self.lang:
            return out + "@" + self.lang
        if self.datatype:
            return out + "^^<" + _escape_iri(self.datatype) + ">"
        return out

    def as_number(self) -> float | None:
        try:
            value = float(self.lexical.strip())
        except ValueError:
            return None
        if value != value:  # NaN
            return None
        return value


Term = IRI | BNode | Literal


def term_from_key(key: str) -> IRI | BNode:
    """Inverse of ``.key`` for non-literal terms."""
    if key.startswith("_:"):
        return BNode(key[2:])
    return IRI(key)


_STRING_ESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\r": "\\r", "\t": "\\t",
                   "\b": "\\b", "\f": "\\f"}


def escape_string(s: str) -> str:
    return "".join(_STRING_ESCAPES.get(ch, ch) for ch in s)


def _escape_iri(s: str) -> str:
    out = []
    for ch in s:
        if ch in '<>"{}|^`\\' or ord(ch) <= 0x20:
            out.append(f"\\u{ord(ch):04X}")
        else:
            out.append(ch)
    return "".join(out)
