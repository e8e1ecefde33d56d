"""Self-indexed physical layout.

Object-property triples are sorted by (P, S, O) and laid out as a chain of
wavelet trees linked by bitmaps::

    p_wt   distinct properties, ascending
    ps_bm  one bit per (p, s) entry, 1 = first subject of a property block
    s_wt   subject of every (p, s) entry, ascending inside each block
    so_bm  one bit per triple, 1 = first object of a (p, s) entry
    o_wt   object of every triple, ascending inside each (p, s) entry

Datatype-property triples use the same chain minus ``o_wt``; the object
position indexes a flat literal table instead.  ``rdf:type`` triples live in
an ordered concept -> subjects map and its transpose.
"""

from __future__ import annotations

import json
import logging
import struct
import time
from bisect import bisect_left, bisect_right
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from . import sds
from .errors import FormatError, IntegrityError, KindError, LookupMissError
from .litemat import (CONCEPT, PROPERTY, HierarchyDictionary, IdInterval, InstanceDictionary,
                      OntologyGraph, encode_hierarchy, materialize_domain_range, merge_intervals)
from .terms import RDF_TYPE, BNode, IRI, Literal

log = logging.getLogger(__name__)

OBJECT = "object"
DATATYPE = "datatype"
TYPE = "rdf:type"


def _bits_for(max_code: int) -> int:
    return max(1, int(max_code).bit_length())


class PSOChain:
    """The p/ps/s/so layers shared by both triple stores."""

    def __init__(self, p_wt, ps_bm, s_wt, so_bm):
        self.p_wt: sds.WaveletTree = p_wt
        self.ps_bm: sds.BitMap = ps_bm
        self.s_wt: sds.WaveletTree = s_wt
        self.so_bm: sds.BitMap = so_bm
        self.properties: list[int] = p_wt.to_list()

    @staticmethod
    def layers(p, s, prop_bits, inst_bits):
        """Build the four layers from PSO-sorted property/subject columns."""
        n = len(p)
        if n:
            new_ps = np.ones(n, dtype=bool)
            new_ps[1:] = (p[1:] != p[:-1]) | (s[1:] != s[:-1])
        else:
            new_ps = np.zeros(0, dtype=bool)
        pair_p = p[new_ps]
        pair_s = s[new_ps]
        new_p = np.ones(len(pair_p), dtype=bool)
        if len(pair_p):
            new_p[1:] = pair_p[1:] != pair_p[:-1]
        props = pair_p[new_p]
        return (sds.WaveletTree(props, prop_bits), sds.BitMap(new_p.astype(np.uint8)),
                sds.WaveletTree(pair_s, inst_bits), sds.BitMap(new_ps.astype(np.uint8)))

    def __len__(self):
        return len(self.so_bm)

    # -- navigation ----------------------------------------------------

    def property_index(self, pid: int) -> int | None:
        """Position of ``pid`` in ``p_wt`` (``wt_p.select(1, id_p)``)."""
        if self.p_wt.rank(len(self.p_wt), pid) == 0:
            return None
        return self.p_wt.select(1, pid)

    def property_range(self, intervals) -> tuple[int, int]:
        """``[i, j)`` range of ``p_wt`` positions whose id lies in one interval.

        ``p_wt`` is ascending, so a single id interval maps to one contiguous
        run of property blocks.
        """
        iv = intervals
        return bisect_left(self.properties, iv.lower), bisect_left(self.properties, iv.upper)

    def subject_range(self, i: int, j: int) -> tuple[int, int]:
        """Subject entries of property blocks ``[i, j)``."""
        return self.ps_bm.select(i + 1, 1), self.ps_bm.select(j + 1, 1)

    def object_range(self, s_begin: int, s_end: int) -> tuple[int, int]:
        return self.so_bm.select(s_begin + 1, 1), self.so_bm.select(s_end + 1, 1)

    def count_predicate(self, pid: int) -> int:
        index_p = self.property_index(pid)
        if index_p is None:
            return 0
        s_begin, s_end = self.subject_range(index_p, index_p + 1)
        o_begin, o_end = self.object_range(s_begin, s_end)
        return o_end - o_begin

    def blocks(self, pids) -> list[tuple[int, int]]:
        """Property-index ranges for an id, or a list of id intervals."""
        if isinstance(pids, int):
            i = self.property_index(pids)
            return [] if i is None else [(i, i + 1)]
        out = []
        for iv in merge_intervals(pids):
            i, j = self.property_range(iv)
            if i < j:
                out.append((i, j))
        return out

    def subject_object_positions(self, s: int, i: int, j: int) -> list[tuple[int, int]]:
        """Object position ranges of subject ``s`` under property blocks ``[i, j)``."""
        out = []
        for k in range(i, j):
            s_begin, s_end = self.subject_range(k, k + 1)
            for index_s in self.s_wt.range_search(s_begin, s_end, s):
                out.append(self.object_range(index_s, index_s + 1))
        return out

    def pairs(self, i: int, j: int):
        """``(subjects, object positions)`` for every triple of blocks ``[i, j)``."""
        s_begin, s_end = self.subject_range(i, j)
        o_begin, o_end = self.object_range(s_begin, s_end)
        subjects = self.s_wt.extract(s_begin, s_end)
        owner = np.cumsum(self.so_bm.bits(o_begin, o_end), dtype=np.int64) - 1
        return subjects[owner], np.arange(o_begin, o_end, dtype=np.int64)

    def property_of_positions(self, positions) -> np.ndarray:
        """Property id owning each object position (positions ascending)."""
        positions = np.asarray(positions, dtype=np.int64)
        if positions.size == 0:
            return np.zeros(0, dtype=np.uint64)
        ps_one = np.array([self.so_bm.rank1(int(x) + 1) - 1 for x in positions], dtype=np.int64)
        blk = np.array([self.ps_bm.rank1(int(x) + 1) - 1 for x in ps_one], dtype=np.int64)
        return np.asarray(self.properties, dtype=np.uint64)[blk]

    def subject_at_position(self, index_o: int) -> int:
        index_s = self.so_bm.rank(index_o + 1, 1) - 1
        return self.s_wt.access(index_s)

    # -- persistence ---------------------------------------------------

    def structures(self):
        return [self.p_wt, self.ps_bm, self.s_wt, self.so_bm]

    def nbytes(self) -> int:
        return sum(len(x.serialize()) for x in self.structures())


class ObjectTripleStore(PSOChain):
    def __init__(self, p_wt, ps_bm, s_wt, so_bm, o_wt):
        super().__init__(p_wt, ps_bm, s_wt, so_bm)
        self.o_wt: sds.WaveletTree = o_wt

    @classmethod
    def build(cls, pso: np.ndarray, prop_bits: int, inst_bits: int) -> "ObjectTripleStore":
        p, s, o = pso[:, 0], pso[:, 1], pso[:, 2]
        return cls(*cls.layers(p, s, prop_bits, inst_bits), sds.WaveletTree(o, inst_bits))

    def structures(self):
        return super().structures() + [self.o_wt]

    def eval_sp(self, s: int, pids) -> list[int]:
        """Objects of ``(s, p, ?o)``; with several properties, distinct and sorted."""
        ranges = self.blocks(pids)
        out = []
        for i, j in ranges:
            for a, b in self.subject_object_positions(s, i, j):
                out.extend(self.o_wt.extract(a, b).tolist())
        if len(ranges) > 1 or (ranges and ranges[0][1] - ranges[0][0] > 1):
            out = sorted(set(out))
        return out

    def eval_po(self, pids, o: int) -> list[int]:
        """Subjects of ``(?s, p, o)``, ascending and distinct."""
        out = []
        for i, j in self.blocks(pids):
            s_begin, s_end = self.subject_range(i, j)
            o_begin, o_end = self.object_range(s_begin, s_end)
            for index_o in self.o_wt.occurrences(o_begin, o_end, o):
                index_s = self.so_bm.rank(index_o + 1, 1) - 1
                out.append(self.s_wt.access(index_s))
        if len(out) > 1 and any(out[k] >= out[k + 1] for k in range(len(out) - 1)):
            out = sorted(set(out))
        return out

    def eval_p(self, pids) -> tuple[np.ndarray, np.ndarray]:
        """``(subjects, objects)`` of ``(?s, p, ?o)`` sorted by (s, o), distinct."""
        subs, objs, multi = [], [], 0
        for i, j in self.blocks(pids):
            multi += j - i
            ss, pos = self.pairs(i, j)
            subs.append(ss)
            objs.append(self.o_wt.extract(int(pos[0]), int(pos[-1]) + 1) if len(pos) else
                        np.zeros(0, np.uint64))
        if not subs:
            return np.zeros(0, np.uint64), np.zeros(0, np.uint64)
        s = np.concatenate(subs)
        o = np.concatenate(objs)
        if multi > 1:
            order = np.lexsort((o, s))
            s, o = s[order], o[order]
            if len(s) > 1:
                keep = np.ones(len(s), dtype=bool)
                keep[1:] = (s[1:] != s[:-1]) | (o[1:] != o[:-1])
                s, o = s[keep], o[keep]
        return s, o

    def triples(self):
        """Walk the whole chain back into ``(p, s, o)`` tuples, PSO order."""
        if not len(self):
            return []
        s, pos = self.pairs(0, len(self.properties))
        p = self.property_of_positions_fast()
        o = self.o_wt.extract(0, len(self.o_wt))
        return list(zip(p.tolist(), s.tolist(), o.tolist()))

    def property_of_positions_fast(self) -> np.ndarray:
        ps_owner = np.cumsum(self.ps_bm.bits(0, len(self.ps_bm)), dtype=np.int64) - 1
        so_owner = np.cumsum(self.so_bm.bits(0, len(self.so_bm)), dtype=np.int64) - 1
        return np.asarray(self.properties, dtype=np.uint64)[ps_owner[so_owner]]


class DatatypeTripleStore(PSOChain):
    """Chain whose object positions index the literal table."""

    def __init__(self, p_wt, ps_bm, s_wt, so_bm, literals: "LiteralTable"):
        super().__init__(p_wt, ps_bm, s_wt, so_bm)
        self.literals = literals

    @classmethod
    def build(cls, ps: np.ndarray, literals: "LiteralTable", prop_bits: int, inst_bits: int):
        return cls(*cls.layers(ps[:, 0], ps[:, 1], prop_bits, inst_bits), literals)

    def eval_datatype(self, s: int, pids) -> list[int]:
        """Literal positions of ``(s, p, ?v)``."""
        out = []
        for i, j in self.blocks(pids):
            for a, b in self.subject_object_positions(s, i, j):
                out.extend(range(a, b))
        return out

    def eval_p(self, pids) -> tuple[np.ndarray, np.ndarray]:
        """``(subjects, literal positions)`` in PSO order."""
        subs, poss = [], []
        for i, j in self.blocks(pids):
            ss, pos = self.pairs(i, j)
            subs.append(ss)
            poss.append(pos)
        if not subs:
            return np.zeros(0, np.uint64), np.zeros(0, np.int64)
        return np.concatenate(subs), np.concatenate(poss)

    def eval_datatype_filtered(self, pids, predicate) -> list[tuple[int, int]]:
        """``(subject, literal position)`` pairs whose literal satisfies ``predicate``."""
        s, pos = self.eval_p(pids)
        lit = self.literals
        return [(a, b) for a, b in zip(s.tolist(), pos.tolist()) if predicate(lit.term(b))]

    def triples(self):
        if not len(self):
            return []
        s, pos = self.pairs(0, len(self.properties))
        ps_owner = np.cumsum(self.ps_bm.bits(0, len(self.ps_bm)), dtype=np.int64) - 1
        so_owner = np.cumsum(self.so_bm.bits(0, len(self.so_bm)), dtype=np.int64) - 1
        p = np.asarray(self.properties, dtype=np.uint64)[ps_owner[so_owner]]
        return [(a, b, self.literals.term(c))
                for a, b, c in zip(p.tolist(), s.tolist(), pos.tolist())]


class LiteralTable:
    """Flat literal storage, one entry per datatype triple (values may repeat)."""

    def __init__(self, lexical=(), tags=()):
        self.lexical: list[str] = list(lexical)
        # "" plain, "^^<dt>" typed, "@lang" language-tagged
        self.tags: list[str] = list(tags) if tags else [""] * len(self.lexical)
        self._canonical: list[int] | None = None
        self._by_term: dict | None = None

    def __len__(self):
        return len(self.lexical)

    def append(self, lit: Literal):
        self.lexical.append(lit.lexical)
        self.tags.append(_literal_tag(lit))
        self._canonical = None

    def term(self, i: int) -> Literal:
        tag = self.tags[i]
        if not tag:
            return Literal(self.lexical[i])
        if tag[0] == "@":
            return Literal(self.lexical[i], lang=tag[1:])
        return Literal(self.lexical[i], datatype=tag[2:])

    def _index(self):
        if self._canonical is None:
            first: dict = {}
            canon = []
            for i, key in enumerate(zip(self.lexical, self.tags)):
                canon.append(first.setdefault(key, i))
            self._canonical = canon
            self._by_term = first
        return self._canonical

    def canonical(self, i: int) -> int:
        """Smallest position holding a literal equal to the one at ``i``."""
        return self._index()[i]

    def canonical_array(self) -> list[int]:
        return self._index()

    def find(self, lit: Literal) -> int | None:
        self._index()
        return self._by_term.get((lit.lexical, _literal_tag(lit)))

    def serialize(self) -> bytes:
        tags = sorted(set(self.tags))
        tag_index = {t: i for i, t in enumerate(tags)}
        parts = [struct.pack("<II", len(self.lexical), len(tags))]
        for t in tags:
            parts.append(_pack_str(t))
        for lex, tag in zip(self.lexical, self.tags):
            parts.append(struct.pack("<I", tag_index[tag]))
            parts.append(_pack_str(lex))
        return b"".join(parts)

    @classmethod
    def deserialize(cls, buf) -> "LiteralTable":
        try:
            n, ntags = struct.unpack_from("<II", buf, 0)
            off = 8
            tags = []
            for _ in range(ntags):
                t, off = _unpack_str(buf, off)
                tags.append(t)
            lex, tg = [], []
            for _ in range(n):
                (ti,) = struct.unpack_from("<I", buf, off)
                off += 4
                s, off = _unpack_str(buf, off)
                lex.append(s)
                tg.append(tags[ti])
        except (struct.error, IndexError, UnicodeDecodeError) as exc:
            raise FormatError(f"corrupt literal table: {exc}") from None
        return cls(lex, tg)


def _literal_tag(lit: Literal) -> str:
    if lit.lang:
        return "@" + lit.lang
    if lit.datatype:
        return "^^" + lit.datatype
    return ""


def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


def _unpack_str(buf, offset):
    (n,) = struct.unpack_from("<I", buf, offset)
    offset += 4
    if len(buf) < offset + n:
        raise struct.error("string runs past end of buffer")
    return bytes(buf[offset:offset + n]).decode("utf-8"), offset + n


class RdfTypeStore:
    """Ordered concept -> subjects map and its transpose."""

    def __init__(self, pairs=()):
        by_concept: dict[int, set[int]] = defaultdict(set)
        for s, c in pairs:
            by_concept[c].add(s)
        self._init(by_concept)

    def _init(self, by_concept):
        self.concept_keys: list[int] = sorted(by_concept)
        self.by_concept: dict[int, list[int]] = {c: sorted(by_concept[c])
                                                 for c in self.concept_keys}
        by_subject: dict[int, list[int]] = defaultdict(list)
        for c in self.concept_keys:
            for s in self.by_concept[c]:
                by_subject[s].append(c)
        self.by_subject: dict[int, list[int]] = dict(by_subject)

    def __len__(self):
        return sum(len(v) for v in self.by_concept.values())

    def concepts_in(self, intervals) -> list[int]:
        keys = self.concept_keys
        out = []
        for iv in merge_intervals(intervals):
            out.extend(keys[bisect_left(keys, iv.lower):bisect_left(keys, iv.upper)])
        return out

    def type_subjects(self, concept) -> list[int]:
        if isinstance(concept, int):
            return list(self.by_concept.get(concept, ()))
        if isinstance(concept, IdInterval):
            concept = [concept]
        cs = self.concepts_in(concept)
        if len(cs) == 1:
            return list(self.by_concept[cs[0]])
        merged: set[int] = set()
        for c in cs:
            merged.update(self.by_concept[c])
        return sorted(merged)

    def type_concepts(self, subject: int) -> list[int]:
        return list(self.by_subject.get(subject, ()))

    def pairs(self):
        for c in self.concept_keys:
            for s in self.by_concept[c]:
                yield s, c

    def serialize(self) -> bytes:
        parts = [struct.pack("<I", len(self.concept_keys))]
        for c in self.concept_keys:
            subs = self.by_concept[c]
            parts.append(struct.pack("<QI", c, len(subs)))
            parts.append(np.asarray(subs, dtype="<u4").tobytes())
        return b"".join(parts)

    @classmethod
    def deserialize(cls, buf) -> "RdfTypeStore":
        st = cls.__new__(cls)
        try:
            (n,) = struct.unpack_from("<I", buf, 0)
            off = 4
            by_concept = {}
            for _ in range(n):
                c, k = struct.unpack_from("<QI", buf, off)
                off += 12
                if len(buf) < off + 4 * k:
                    raise struct.error("truncated subject list")
                by_concept[c] = np.frombuffer(bytes(buf[off:off + 4 * k]), dtype="<u4").tolist()
                off += 4 * k
        except struct.error as exc:
            raise FormatError(f"corrupt rdf:type store: {exc}") from None
        st._init(by_concept)
        return st


# ---------------------------------------------------------------------------
# Knowledge base
# ---------------------------------------------------------------------------


@dataclass
class BuildReport:
    input_triples: int = 0
    distinct_triples: int = 0
    object_triples: int = 0
    datatype_triples: int = 0
    type_triples: int = 0
    inferred_type_triples: int = 0
    concepts: int = 0
    properties: int = 0
    instances: int = 0
    literals: int = 0
    concept_bits: int = 0
    property_bits: int = 0
    build_seconds: float = 0.0
    extra: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d.update(d.pop("extra"))
        return d


SECTION_NAMES = {
    1: "concept_dictionary", 2: "property_dictionary", 3: "instance_dictionary",
    4: "literal_table", 5: "object_store", 6: "datatype_store", 7: "type_store",
    8: "inferred_type_store",
}
DICTIONARY_SECTIONS = {1, 2, 3}
LITERAL_SECTIONS = {4}
TRIPLE_SECTIONS = {5, 6, 7, 8}
TAG_KB = 0x10
FORMAT_VERSION = 1


class KnowledgeBase:
    """Dictionaries plus the three stores; immutable once built."""

    def __init__(self, concepts: HierarchyDictionary, properties: HierarchyDictionary,
                 instances: InstanceDictionary, objects: ObjectTripleStore,
                 datatypes: DatatypeTripleStore, types: RdfTypeStore,
                 inferred_types: RdfTypeStore, report: BuildReport | None = None):
        self.concepts = concepts
        self.properties = properties
        self.instances = instances
        self.objects = objects
        self.datatypes = datatypes
        self.literals = datatypes.literals
        self.types = types
        self.inferred_types = inferred_types
        self.report = report or BuildReport()
        self.type_pid = properties.get_id(RDF_TYPE)
        self._stats_cache: dict = {}      # optimizer statistics, keyed by reasoning flag

    # -- construction --------------------------------------------------

    @classmethod
    def from_triples(cls, triples, ontology: OntologyGraph | None = None) -> "KnowledgeBase":
        """Encode raw triples (see :mod:`succinct_kg.parser`) and build the stores."""
        t0 = time.perf_counter()
        ontology = ontology or OntologyGraph()
        raw = list(triples)
        distinct = list(dict.fromkeys(raw))
        data_props, data_concepts = {RDF_TYPE}, set()
        for t in distinct:
            p = t.predicate.value
            if p == RDF_TYPE:
                if isinstance(t.object, Literal):
                    raise IntegrityError(f"rdf:type object must be an IRI: {t.n3()}")
                data_concepts.add(t.object.key)
            else:
                data_props.add(p)
        concepts = encode_hierarchy(ontology, CONCEPT, data_concepts)
        properties = encode_hierarchy(ontology, PROPERTY, data_props)
        instances = InstanceDictionary()
        encoded = []
        for t in distinct:
            p = t.predicate.value
            s = instances.add(t.subject.key)
            if p == RDF_TYPE:
                encoded.append((properties.get_id(p), s, concepts.get_id(t.object.key), TYPE))
            elif isinstance(t.object, Literal):
                encoded.append((properties.get_id(p), s, t.object, DATATYPE))
            else:
                encoded.append((properties.get_id(p), s, instances.add(t.object.key), OBJECT))
        inferred = []
        for subj, c in sorted(materialize_domain_range(ontology, distinct)):
            inferred.append((instances.add(subj), concepts.get_id(c)))
        kb = build(encoded, concepts, properties, instances, inferred)
        kb.report.input_triples = len(raw)
        kb.report.distinct_triples = len(distinct)
        kb.report.build_seconds = time.perf_counter() - t0
        return kb

    # -- lookups -------------------------------------------------------

    def concept_intervals(self, uri: str, reasoning: bool) -> list[IdInterval] | None:
        t = self.concepts.forward.get(uri)
        if t is None:
            return None
        if reasoning:
            return self.concepts.intervals_of(uri)
        return [IdInterval(t.id, t.id + 1)]

    def property_intervals(self, uri: str, reasoning: bool) -> list[IdInterval] | None:
        t = self.properties.forward.get(uri)
        if t is None:
            return None
        if reasoning:
            return self.properties.intervals_of(uri)
        return [IdInterval(t.id, t.id + 1)]

    def count_predicate(self, pid: int) -> int:
        return self.objects.count_predicate(pid) + self.datatypes.count_predicate(pid)

    def eval_sp(self, s: int, pids) -> list[int]:
        return self.objects.eval_sp(s, pids)

    def eval_po(self, pids, o: int) -> list[int]:
        return self.objects.eval_po(pids, o)

    def eval_p(self, pids):
        return self.objects.eval_p(pids)

    def eval_datatype(self, s: int, pids) -> list[str]:
        if isinstance(pids, int) and self.objects.property_index(pids) is not None \
                and self.datatypes.property_index(pids) is None:
            raise KindError(f"property id {pids} is an object property")
        return [self.literals.lexical[i] for i in self.datatypes.eval_datatype(s, pids)]

    def eval_datatype_filtered(self, pids, predicate):
        return [(s, self.literals.lexical[i])
                for s, i in self.datatypes.eval_datatype_filtered(pids, predicate)]

    def type_subjects(self, concept, reasoning: bool = False) -> list[int]:
        out = self.types.type_subjects(concept)
        if reasoning and len(self.inferred_types):
            extra = self.inferred_types.type_subjects(concept)
            if extra:
                out = sorted(set(out).union(extra))
        return out

    def type_concepts(self, subject: int, reasoning: bool = False) -> list[int]:
        out = self.types.type_concepts(subject)
        if reasoning:
            out = sorted(set(out).union(self.inferred_types.type_concepts(subject)))
        return out

    def decode_instance(self, id_: int) -> str:
        return self.instances.extract(id_)

    def decode_triples(self):
        """All explicit triples as ``(s, p, o)`` key/literal tuples, per store."""
        out = {OBJECT: [], DATATYPE: [], TYPE: []}
        ex_p = self.properties.extract
        ex_i = self.instances.extract
        for p, s, o in self.objects.triples():
            out[OBJECT].append((ex_i(s), ex_p(p), ex_i(o)))
        for p, s, lit in self.datatypes.triples():
            out[DATATYPE].append((ex_i(s), ex_p(p), lit))
        for s, c in self.types.pairs():
            out[TYPE].append((ex_i(s), RDF_TYPE, self.concepts.extract(c)))
        return out

    def statistics(self) -> dict:
        r = self.report
        return {
            "object_triples": len(self.objects),
            "datatype_triples": len(self.datatypes),
            "type_triples": len(self.types),
            "inferred_type_triples": len(self.inferred_types),
            "concepts": len(self.concepts),
            "properties": len(self.properties),
            "instances": len(self.instances),
            "literals": len(self.literals),
            "concept_bits": self.concepts.total_bits,
            "property_bits": self.properties.total_bits,
            "input_triples": r.input_triples,
            "distinct_triples": r.distinct_triples,
        }

    # -- persistence ---------------------------------------------------

    def _sections(self) -> dict[int, bytes]:
        def chain(c):
            return b"".join(x.serialize() for x in c.structures())
        return {
            1: self.concepts.serialize(),
            2: self.properties.serialize(),
            3: self.instances.serialize(),
            4: self.literals.serialize(),
            5: chain(self.objects),
            6: chain(self.datatypes),
            7: self.types.serialize(),
            8: self.inferred_types.serialize(),
        }

    def to_bytes(self) -> bytes:
        sections = self._sections()
        meta = json.dumps({"counts": self.statistics(),
                           "build_seconds": self.report.build_seconds}).encode()
        head_size = 4 + 1 + 4 + 4 + len(meta) + 4 + 17 * len(sections)
        table, offset = [], head_size
        for sid, blob in sections.items():
            table.append(struct.pack("<BQQ", sid, offset, len(blob)))
            offset += len(blob)
        header = (sds.MAGIC + struct.pack("<BI", TAG_KB, FORMAT_VERSION)
                  + struct.pack("<I", len(meta)) + meta
                  + struct.pack("<I", len(sections)) + b"".join(table))
        assert len(header) == head_size
        return header + b"".join(sections.values())

    def size_report(self) -> dict:
        sections = self._sections()
        total = len(self.to_bytes())
        sizes = {SECTION_NAMES[k]: len(v) for k, v in sections.items()}
        dict_bytes = sum(len(sections[k]) for k in DICTIONARY_SECTIONS)
        lit_bytes = sum(len(sections[k]) for k in LITERAL_SECTIONS)
        triple_bytes = sum(len(sections[k]) for k in TRIPLE_SECTIONS)
        return {"file_bytes": total, "header_bytes": total - sum(sizes.values()),
                "dictionary_bytes": dict_bytes, "literal_bytes": lit_bytes,
                "triple_bytes": triple_bytes, "sections": sizes}

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "KnowledgeBase":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    @classmethod
    def from_bytes(cls, buf) -> "KnowledgeBase":
        try:
            if buf[:4] != sds.MAGIC:
                raise FormatError("not a store image (bad magic)")
            tag, version = struct.unpack_from("<BI", buf, 4)
            if tag != TAG_KB:
                raise FormatError(f"not a store image (tag {tag:#x})")
            if version != FORMAT_VERSION:
                raise FormatError(f"unsupported store format version {version}")
            (mlen,) = struct.unpack_from("<I", buf, 9)
            meta = json.loads(bytes(buf[13:13 + mlen]))
            off = 13 + mlen
            (n,) = struct.unpack_from("<I", buf, off)
            off += 4
            sections = {}
            for _ in range(n):
                sid, start, length = struct.unpack_from("<BQQ", buf, off)
                off += 17
                if start + length > len(buf):
                    raise FormatError(f"section {sid} runs past end of file")
                sections[sid] = memoryview(buf)[start:start + length]
        except (struct.error, ValueError) as exc:
            raise FormatError(f"corrupt store header: {exc}") from None
        missing = set(SECTION_NAMES) - set(sections)
        if missing:
            raise FormatError(f"store image lacks sections {sorted(missing)}")
        concepts, _ = HierarchyDictionary.deserialize(sections[1])
        properties, _ = HierarchyDictionary.deserialize(sections[2])
        instances, _ = InstanceDictionary.deserialize(sections[3])
        literals = LiteralTable.deserialize(sections[4])
        objects = ObjectTripleStore(*_read_structures(sections[5], 5))
        datatypes = DatatypeTripleStore(*_read_structures(sections[6], 4), literals)
        types = RdfTypeStore.deserialize(sections[7])
        inferred = RdfTypeStore.deserialize(sections[8])
        counts = meta.get("counts", {})
        report = BuildReport(input_triples=counts.get("input_triples", 0),
                             distinct_triples=counts.get("distinct_triples", 0),
                             build_seconds=meta.get("build_seconds", 0.0))
        kb = cls(concepts, properties, instances, objects, datatypes, types, inferred, report)
        _fill_report(kb)
        kb.validate()
        return kb

    def validate(self):
        """Cheap integrity checks linking the layers together."""
        for chain in (self.objects, self.datatypes):
            if chain.ps_bm.count(1) != len(chain.p_wt):
                raise IntegrityError("PS bitmap block count differs from property layer")
            if len(chain.ps_bm) != len(chain.s_wt) or chain.so_bm.count(1) != len(chain.s_wt):
                raise IntegrityError("SO bitmap entry count differs from subject layer")
            for pid in chain.properties:
                if pid not in self.properties.inverse:
                    raise IntegrityError(f"property id {pid} has no dictionary entry")
        if len(self.objects.o_wt) != len(self.objects.so_bm):
            raise IntegrityError("object layer length differs from SO bitmap")
        if len(self.literals) != len(self.datatypes.so_bm):
            raise IntegrityError("literal table length differs from datatype chain")
        for st in (self.types, self.inferred_types):
            for c in st.concept_keys:
                if c not in self.concepts.inverse:
                    raise IntegrityError(f"concept id {c} has no dictionary entry")


def _read_structures(buf, count):
    out, off = [], 0
    for _ in range(count):
        obj, off = sds.read(buf, off)
        out.append(obj)
    if off != len(buf):
        raise FormatError("trailing bytes after triple store structures")
    return out


def _fill_report(kb: KnowledgeBase):
    r = kb.report
    r.object_triples = len(kb.objects)
    r.datatype_triples = len(kb.datatypes)
    r.type_triples = len(kb.types)
    r.inferred_type_triples = len(kb.inferred_types)
    r.concepts = len(kb.concepts)
    r.properties = len(kb.properties)
    r.instances = len(kb.instances)
    r.literals = len(kb.literals)
    r.concept_bits = kb.concepts.total_bits
    r.property_bits = kb.properties.total_bits


def build(encoded_triples, concepts: HierarchyDictionary, properties: HierarchyDictionary,
          instances: InstanceDictionary, inferred_types=()) -> KnowledgeBase:
    """Build the stores from ``(p, s, o, kind)`` id tuples.

    ``o`` is an instance id for object triples, a concept id for rdf:type
    triples and a :class:`Literal` for datatype triples.  Duplicates collapse.
    """
    obj_rows, dt_rows, type_rows = set(), {}, set()
    max_inst = instances.max_id
    for p, s, o, kind in encoded_triples:
        if p not in properties.inverse:
            raise IntegrityError(f"dangling property id {p}")
        if not 0 < s <= max_inst:
            raise IntegrityError(f"dangling subject id {s}")
        if kind == OBJECT:
            if not 0 < o <= max_inst:
                raise IntegrityError(f"dangling object id {o}")
            obj_rows.add((p, s, o))
        elif kind == DATATYPE:
            if not isinstance(o, Literal):
                raise IntegrityError("datatype triple without a literal object")
            dt_rows.setdefault((p, s, o), None)
        elif kind == TYPE:
            if o not in concepts.inverse:
                raise IntegrityError(f"dangling concept id {o}")
            type_rows.add((s, o))
        else:
            raise ValueError(f"unknown triple kind {kind!r}")

    prop_bits = max(1, properties.total_bits)
    inst_bits = _bits_for(max_inst)

    pso = np.array(sorted(obj_rows), dtype=np.uint64).reshape(-1, 3)
    objects = ObjectTripleStore.build(pso, prop_bits, inst_bits)

    # stable sort keeps literal arrival order inside one (p, s) entry
    dt_list = sorted(dt_rows, key=lambda r: (r[0], r[1]))
    literals = LiteralTable()
    for _, _, lit in dt_list:
        literals.append(lit)
    ps = np.array([(p, s) for p, s, _ in dt_list], dtype=np.uint64).reshape(-1, 2)
    datatypes = DatatypeTripleStore.build(ps, literals, prop_bits, inst_bits)

    types = RdfTypeStore(type_rows)
    inferred = RdfTypeStore((s, c) for s, c in inferred_types if (s, c) not in type_rows)

    # direct occurrence statistics
    for p, s, o in obj_rows:
        properties.occurrence[p] += 1
        instances.occurrence[s] += 1
        instances.occurrence[o] += 1
    for p, s, _ in dt_list:
        properties.occurrence[p] += 1
        instances.occurrence[s] += 1
    tp = properties.get_id(RDF_TYPE)
    for s, c in type_rows:
        concepts.occurrence[c] += 1
        instances.occurrence[s] += 1
        if tp is not None:
            properties.occurrence[tp] += 1

    kb = KnowledgeBase(concepts, properties, instances, objects, datatypes, types, inferred)
    _fill_report(kb)
    kb.report.distinct_triples = len(obj_rows) + len(dt_list) + len(type_rows)
    kb.report.input_triples = kb.report.distinct_triples
    return kb
