"""Prefix-code identifiers for concept and property hierarchies.

Every hierarchy term gets an integer whose high bits are its parent's code
followed by a local code for the term among its siblings; all ids are then
right-padded with zeros to a common width ``L``.  The ids of a term and all
of its descendants therefore form the half-open interval
``[id, id + 2**(L - used_length))``.

Instances use plain first-appearance integers.
"""

from __future__ import annotations

import itertools
import logging
import struct
from collections import defaultdict
from dataclasses import dataclass, field

from .errors import CapacityError, EncodingError, FormatError, LookupMissError
from .terms import OWL_THING, TOP_PROPERTY, Literal

log = logging.getLogger(__name__)

MAX_BITS = 64

CONCEPT = "concept"
PROPERTY = "property"
INSTANCE = "instance"


@dataclass
class OntologyGraph:
    """rho-df axioms: ``child -> {parents}`` maps plus domain/range declarations."""

    concept_parents: dict[str, set[str]] = field(default_factory=dict)
    property_parents: dict[str, set[str]] = field(default_factory=dict)
    domain_of: dict[str, set[str]] = field(default_factory=dict)
    range_of: dict[str, set[str]] = field(default_factory=dict)
    ignored: int = 0

    def add_subclass(self, child: str, parent: str):
        self.concept_parents.setdefault(child, set()).add(parent)
        self.concept_parents.setdefault(parent, set())

    def add_subproperty(self, child: str, parent: str):
        self.property_parents.setdefault(child, set()).add(parent)
        self.property_parents.setdefault(parent, set())

    def concepts(self) -> set[str]:
        out = set(self.concept_parents)
        for cs in itertools.chain(self.domain_of.values(), self.range_of.values()):
            out |= cs
        return out

    def properties(self) -> set[str]:
        return set(self.property_parents) | set(self.domain_of) | set(self.range_of)

    def parents(self, kind: str) -> dict[str, set[str]]:
        return self.concept_parents if kind == CONCEPT else self.property_parents

    def is_empty(self) -> bool:
        return not (self.concept_parents or self.property_parents
                    or self.domain_of or self.range_of)


@dataclass(frozen=True, slots=True)
class EncodedTerm:
    id: int
    used_length: int
    kind: str


@dataclass(frozen=True, slots=True)
class IdInterval:
    lower: int  # inclusive
    upper: int  # exclusive

    def __contains__(self, x: int) -> bool:
        return self.lower <= x < self.upper

    @property
    def width(self) -> int:
        return self.upper - self.lower


def merge_intervals(intervals) -> list[IdInterval]:
    out: list[IdInterval] = []
    for iv in sorted(intervals, key=lambda v: (v.lower, v.upper)):
        if out and iv.lower <= out[-1].upper:
            if iv.upper > out[-1].upper:
                out[-1] = IdInterval(out[-1].lower, iv.upper)
        else:
            out.append(iv)
    return out


class HierarchyDictionary:
    """Bidirectional URI/id map for one hierarchy plus occurrence counts."""

    def __init__(self, kind: str, total_bits: int, root: str, root_implicit: bool):
        self.kind = kind
        self.total_bits = total_bits
        self.root = root
        self.root_implicit = root_implicit
        self.forward: dict[str, EncodedTerm] = {}
        self.inverse: dict[int, str] = {}
        self.occurrence: dict[int, int] = defaultdict(int)
        # every declared parent, primary (encoding) parent first
        self.parents: dict[str, tuple[str, ...]] = {}
        self._children: dict[str, list[str]] | None = None
        self._sorted_ids: list[int] | None = None

    def __len__(self):
        return len(self.forward)

    def __contains__(self, uri: str) -> bool:
        return uri in self.forward

    def __eq__(self, other):
        if not isinstance(other, HierarchyDictionary):
            return NotImplemented
        return (self.kind, self.total_bits, self.root, self.root_implicit, self.forward,
                dict(self.occurrence), self.parents) == (
            other.kind, other.total_bits, other.root, other.root_implicit, other.forward,
            dict(other.occurrence), other.parents)

    def _add(self, uri: str, term: EncodedTerm):
        self.forward[uri] = term
        self.inverse[term.id] = uri
        self._children = None
        self._sorted_ids = None

    def locate(self, uri: str) -> EncodedTerm:
        try:
            return self.forward[uri]
        except KeyError:
            raise LookupMissError(f"{self.kind} not in dictionary: {uri}") from None

    def extract(self, id_: int) -> str:
        try:
            return self.inverse[id_]
        except KeyError:
            raise LookupMissError(f"no {self.kind} with id {id_}") from None

    def get_id(self, uri: str) -> int | None:
        t = self.forward.get(uri)
        return None if t is None else t.id

    def sorted_ids(self) -> list[int]:
        if self._sorted_ids is None:
            self._sorted_ids = sorted(self.inverse)
        return self._sorted_ids

    def interval_of(self, uri: str) -> IdInterval:
        t = self.locate(uri)
        return IdInterval(t.id, t.id + (1 << (self.total_bits - t.used_length)))

    def children(self, uri: str) -> list[str]:
        if self._children is None:
            ch = defaultdict(list)
            for child, ps in self.parents.items():
                for p in ps:
                    ch[p].append(child)
            self._children = {k: sorted(v) for k, v in ch.items()}
            self._multi = any(len(ps) > 1 for ps in self.parents.values())
        return self._children.get(uri, [])

    @property
    def has_multiple_inheritance(self) -> bool:
        self.children("")
        return self._multi

    def descendants(self, uri: str, include_self: bool = True) -> set[str]:
        self.locate(uri)
        seen = {uri}
        stack = [uri]
        while stack:
            for c in self.children(stack.pop()):
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        if not include_self:
            seen.discard(uri)
        return seen

    def ancestors(self, uri: str, include_self: bool = True) -> set[str]:
        """Declared super-terms; an implicit root is never reported."""
        self.locate(uri)
        seen = {uri}
        stack = [uri]
        while stack:
            for p in self.parents.get(stack.pop(), ()):
                if p not in seen:
                    seen.add(p)
                    stack.append(p)
        if self.root_implicit:
            seen.discard(self.root)
            if uri == self.root and include_self:
                seen.add(uri)
        if not include_self:
            seen.discard(uri)
        return seen

    def intervals_of(self, uri: str) -> list[IdInterval]:
        """Intervals covering ``uri`` and every sub-term.

        A single interval for tree-shaped hierarchies; extra intervals are
        added for sub-terms reached only through a secondary parent.
        """
        main = self.interval_of(uri)
        chosen = [main]
        if not self.has_multiple_inheritance:
            return chosen
        extra = []
        for d in self.descendants(uri):
            did = self.forward[d].id
            if did in main:
                continue
            extra.append(self.interval_of(d))
        return merge_intervals(chosen + extra)

    def ids_in(self, intervals) -> list[int]:
        """Assigned ids falling inside any of ``intervals``, ascending."""
        from bisect import bisect_left
        ids = self.sorted_ids()
        out = []
        for iv in merge_intervals(intervals):
            i = bisect_left(ids, iv.lower)
            while i < len(ids) and ids[i] < iv.upper:
                out.append(ids[i])
                i += 1
        return out

    # -- persistence ---------------------------------------------------

    def serialize(self) -> bytes:
        uris = sorted(self.forward, key=lambda u: self.forward[u].id)
        index = {u: i for i, u in enumerate(uris)}
        parts = [struct.pack("<BBBI", 0 if self.kind == CONCEPT else 1, self.total_bits,
                             int(self.root_implicit), len(uris)),
                 _pack_str(self.root)]
        for u in uris:
            t = self.forward[u]
            parts.append(_pack_str(u))
            parts.append(struct.pack("<QBQ", t.id, t.used_length, self.occurrence.get(t.id, 0)))
        edges = [(index[c], index[p]) for c, ps in sorted(self.parents.items()) for p in ps]
        # order inside each parents tuple matters (primary first)
        parts.append(struct.pack("<I", len(edges)))
        for c, p in edges:
            parts.append(struct.pack("<II", c, p))
        return b"".join(parts)

    @classmethod
    def deserialize(cls, buf, offset: int = 0) -> tuple["HierarchyDictionary", int]:
        try:
            kind_b, bits, implicit, n = struct.unpack_from("<BBBI", buf, offset)
            offset += 7
            root, offset = _unpack_str(buf, offset)
            d = cls(CONCEPT if kind_b == 0 else PROPERTY, bits, root, bool(implicit))
            uris = []
            for _ in range(n):
                u, offset = _unpack_str(buf, offset)
                id_, used, occ = struct.unpack_from("<QBQ", buf, offset)
                offset += 17
                d._add(u, EncodedTerm(id_, used, d.kind))
                if occ:
                    d.occurrence[id_] = occ
                uris.append(u)
            (m,) = struct.unpack_from("<I", buf, offset)
            offset += 4
            parents: dict[str, list[str]] = defaultdict(list)
            for _ in range(m):
                c, p = struct.unpack_from("<II", buf, offset)
                offset += 8
                parents[uris[c]].append(uris[p])
        except (struct.error, IndexError, UnicodeDecodeError) as exc:
            raise FormatError(f"corrupt hierarchy dictionary: {exc}") from None
        d.parents = {c: tuple(ps) for c, ps in parents.items()}
        d._children = None
        return d, offset


class InstanceDictionary:
    """Individuals (IRIs and blank nodes) numbered from 1 by first appearance."""

    def __init__(self):
        self.forward: dict[str, int] = {}
        self.inverse: list[str | None] = [None]  # id 0 means "absent"
        self.occurrence: list[int] = [0]

    def __len__(self):
        return len(self.inverse) - 1

    def __contains__(self, key: str) -> bool:
        return key in self.forward

    def __eq__(self, other):
        if not isinstance(other, InstanceDictionary):
            return NotImplemented
        return self.inverse == other.inverse and self.occurrence == other.occurrence

    def add(self, key: str) -> int:
        id_ = self.forward.get(key)
        if id_ is None:
            id_ = len(self.inverse)
            self.forward[key] = id_
            self.inverse.append(key)
            self.occurrence.append(0)
        return id_

    def locate(self, key: str) -> int:
        try:
            return self.forward[key]
        except KeyError:
            raise LookupMissError(f"instance not in dictionary: {key}") from None

    def get_id(self, key: str) -> int | None:
        return self.forward.get(key)

    def extract(self, id_: int) -> str:
        if 0 < id_ < len(self.inverse):
            return self.inverse[id_]
        raise LookupMissError(f"no instance with id {id_}")

    @property
    def max_id(self) -> int:
        return len(self.inverse) - 1

    def serialize(self) -> bytes:
        parts = [struct.pack("<I", len(self))]
        for key, occ in zip(self.inverse[1:], self.occurrence[1:]):
            parts.append(_pack_str(key))
            parts.append(struct.pack("<Q", occ))
        return b"".join(parts)

    @classmethod
    def deserialize(cls, buf, offset: int = 0) -> tuple["InstanceDictionary", int]:
        d = cls()
        try:
            (n,) = struct.unpack_from("<I", buf, offset)
            offset += 4
            for _ in range(n):
                key, offset = _unpack_str(buf, offset)
                (occ,) = struct.unpack_from("<Q", buf, offset)
                offset += 8
                d.occurrence[d.add(key)] = occ
        except (struct.error, UnicodeDecodeError) as exc:
            raise FormatError(f"corrupt instance dictionary: {exc}") from None
        return d, offset


def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


def _unpack_str(buf, offset):
    (n,) = struct.unpack_from("<I", buf, offset)
    offset += 4
    if len(buf) < offset + n:
        raise struct.error("string runs past end of buffer")
    return bytes(buf[offset:offset + n]).decode("utf-8"), offset + n


def _check_acyclic(parents: dict[str, set[str]], kind: str):
    WHITE, GREY, BLACK = 0, 1, 2
    color = defaultdict(int)
    for start in sorted(parents):
        if color[start]:
            continue
        stack = [(start, iter(sorted(parents.get(start, ()))))]
        color[start] = GREY
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[node] = BLACK
                stack.pop()
            elif color[nxt] == GREY:
                raise EncodingError(f"cycle in {kind} hierarchy through {nxt}")
            elif color[nxt] == WHITE:
                color[nxt] = GREY
                stack.append((nxt, iter(sorted(parents.get(nxt, ())))))


def encode_hierarchy(g: OntologyGraph, kind: str, extra_terms=(), root: str | None = None
                     ) -> HierarchyDictionary:
    """Top-down prefix encoding of one hierarchy.

    Terms without a parent (including ``extra_terms`` seen only in data) hang
    off the root.  Siblings are numbered ``1..n`` in URI order on
    ``n.bit_length()`` bits; local code 0 is never used, so a child cannot
    collide with its parent once ids are zero-padded.
    """
    if root is None:
        root = OWL_THING if kind == CONCEPT else TOP_PROPERTY
    declared = g.parents(kind)
    terms = set(declared) | set(extra_terms)
    if kind == CONCEPT:
        terms |= g.concepts()
    else:
        terms |= g.properties()
    root_implicit = root not in terms
    parents: dict[str, set[str]] = {}
    for t in terms:
        ps = set(declared.get(t, ())) - {t}
        if t == root:
            if ps:
                log.warning("%s root %s declared with parents; ignored", kind, root)
            continue
        parents[t] = ps
    _check_acyclic(parents, kind)

    ordered_parents: dict[str, tuple[str, ...]] = {}
    children: dict[str, list[str]] = defaultdict(list)
    for t, ps in parents.items():
        if ps:
            ordered = sorted(ps)
            ordered_parents[t] = tuple(ordered)
            children[ordered[0]].append(t)
        else:
            ordered_parents[t] = (root,)
            children[root].append(t)

    codes: dict[str, tuple[int, int]] = {root: (1, 1)}
    queue = [root]
    for node in queue:
        kids = sorted(children.get(node, ()))
        if not kids:
            continue
        width = len(kids).bit_length()
        pbits, plen = codes[node]
        for local, kid in enumerate(kids, 1):
            length = plen + width
            if length > MAX_BITS:
                raise CapacityError(
                    f"{kind} hierarchy needs more than {MAX_BITS} bits at {kid}")
            codes[kid] = ((pbits << width) | local, length)
            queue.append(kid)
    if len(codes) != len(parents) + 1:
        raise EncodingError(f"{kind} hierarchy is not connected to its root")

    total = max(length for _, length in codes.values())
    d = HierarchyDictionary(kind, total, root, root_implicit)
    for uri in sorted(codes, key=lambda u: (codes[u][0] << (total - codes[u][1]))):
        bits, length = codes[uri]
        d._add(uri, EncodedTerm(bits << (total - length), length, kind))
    d.parents = dict(sorted(ordered_parents.items()))
    d._children = None
    return d


def interval_of(d: HierarchyDictionary, term: str) -> IdInterval:
    return d.interval_of(term)


_fresh = itertools.count()


@dataclass(frozen=True, slots=True)
class RangeConstraint:
    """``FILTER(?var >= lower && ?var < upper)`` for each interval (OR-ed)."""

    variable: str
    intervals: tuple[IdInterval, ...]

    def matches(self, id_: int) -> bool:
        return any(id_ in iv for iv in self.intervals)


def rewrite_constraint(d: HierarchyDictionary, term: str, variable: str | None = None
                       ) -> RangeConstraint:
    intervals = tuple(d.intervals_of(term))
    if variable is None:
        variable = f"_lm{next(_fresh)}"
    return RangeConstraint(variable, intervals)


def aggregate_statistics(d: HierarchyDictionary, counts=None) -> dict[int, int]:
    """Per-term triple counts summed over each term's sub-hierarchy."""
    if counts is None:
        counts = d.occurrence
    totals = {}
    for uri, t in d.forward.items():
        totals[t.id] = sum(counts.get(d.forward[x].id, 0) for x in d.descendants(uri))
    return totals


def materialize_domain_range(g: OntologyGraph, triples, property_dict=None) -> set[tuple[str, str]]:
    """Inferred ``(individual, concept)`` typings from domain/range axioms.

    Declarations on super-properties apply to sub-property triples.  Literal
    objects never receive a type.
    """
    if not g.domain_of and not g.range_of:
        return set()
    cache: dict[str, tuple[set[str], set[str]]] = {}

    def decls(p):
        hit = cache.get(p)
        if hit is None:
            sup = _ancestors_in(g.property_parents, p)
            dom = set().union(*(g.domain_of.get(q, set()) for q in sup))
            rng = set().union(*(g.range_of.get(q, set()) for q in sup))
            hit = cache[p] = (dom, rng)
        return hit

    out = set()
    for t in triples:
        dom, rng = decls(t.predicate.value)
        for c in dom:
            out.add((t.subject.key, c))
        if rng and not isinstance(t.object, Literal):
            for c in rng:
                out.add((t.object.key, c))
    return out


def _ancestors_in(parents: dict[str, set[str]], x: str) -> set[str]:
    seen = {x}
    stack = [x]
    while stack:
        for p in parents.get(stack.pop(), ()):
            if p not in seen:
                seen.add(p)
                stack.append(p)
    return seen
