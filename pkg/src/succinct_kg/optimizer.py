"""Left-deep join ordering by pattern shape, join type and occurrence counts."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import UnsupportedFeatureError
from .litemat import IdInterval, RangeConstraint, aggregate_statistics
from .parser import Query, TriplePattern, Var
from .terms import IRI

SS, SO, OTHER = "SS", "SO", "OO"
_JOIN_RANK = {SS: 0, SO: 1, OTHER: 2}

# access methods
TYPE_S = "type(s,?c)"      # concepts of a known subject
TYPE_O = "type(?s,C)"      # subjects of a known concept
TYPE_ALL = "type(?s,?c)"
SP = "sp?"
PO = "?po"
P = "?p?"
VARPRED = "?p-scan"


def shape_rank(tp: TriplePattern) -> int:
    """Pattern shape order: (s,type,?o) > (?s,type,o) > (s,p,?o) > (?s,p,o) > (?s,p,?o)."""
    sv, pv, ov = (isinstance(x, Var) for x in (tp.s, tp.p, tp.o))
    if pv:
        return 5
    if tp.is_type:
        if not sv:
            return 0
        return 1 if not ov else 5
    if not sv:
        return 2
    return 3 if not ov else 4


def access_method(tp: TriplePattern) -> str:
    if isinstance(tp.p, Var):
        return VARPRED
    sv, ov = isinstance(tp.s, Var), isinstance(tp.o, Var)
    if tp.is_type:
        if not sv:
            return TYPE_S
        return TYPE_O if not ov else TYPE_ALL
    if not sv:
        return SP
    return PO if not ov else P


def _positions(tp: TriplePattern) -> dict[str, set[str]]:
    out: dict[str, set[str]] = {}
    for pos, t in (("s", tp.s), ("p", tp.p), ("o", tp.o)):
        if isinstance(t, Var):
            out.setdefault(t.name, set()).add(pos)
    return out


def join_label(a: TriplePattern, b: TriplePattern) -> str | None:
    """Best join type between two TPs, ``None`` when they share no variable."""
    pa, pb = _positions(a), _positions(b)
    best = None
    for v in pa.keys() & pb.keys():
        x, y = pa[v], pb[v]
        if "s" in x and "s" in y:
            lab = SS
        elif ("s" in x and "o" in y) or ("o" in x and "s" in y):
            lab = SO
        else:
            lab = OTHER
        if best is None or _JOIN_RANK[lab] < _JOIN_RANK[best]:
            best = lab
    return best


@dataclass
class QueryGraph:
    patterns: tuple[TriplePattern, ...]
    edges: dict[tuple[int, int], str] = field(default_factory=dict)

    def neighbours(self, i: int):
        for (a, b), lab in self.edges.items():
            if a == i:
                yield b, lab
            elif b == i:
                yield a, lab

    def label(self, i: int, j: int) -> str | None:
        return self.edges.get((min(i, j), max(i, j)))

    def is_connected(self) -> bool:
        n = len(self.patterns)
        if n <= 1:
            return True
        seen, stack = {0}, [0]
        while stack:
            for j, _ in self.neighbours(stack.pop()):
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        return len(seen) == n


def build_query_graph(query: Query) -> QueryGraph:
    g = QueryGraph(tuple(query.patterns))
    for i, j in combinations(range(len(g.patterns)), 2):
        lab = join_label(g.patterns[i], g.patterns[j])
        if lab:
            g.edges[(i, j)] = lab
    if not g.is_connected():
        raise UnsupportedFeatureError("cartesian product",
                                      "triple patterns do not form a connected graph")
    return g


class Statistics:
    """Occurrence-based cardinality estimates for one knowledge base."""

    def __init__(self, kb, reasoning: bool = False):
        self.kb = kb
        self.reasoning = reasoning
        self._concept_totals = None
        self._distinct_obj: dict[int, int] = {}

    def concept_count(self, uri: str) -> int:
        d = self.kb.concepts
        t = d.forward.get(uri)
        if t is None:
            return 0
        if self.reasoning:
            if self._concept_totals is None:
                occ = dict(d.occurrence)
                for s, c in self.kb.inferred_types.pairs():
                    occ[c] = occ.get(c, 0) + 1
                self._concept_totals = aggregate_statistics(d, occ)
            return self._concept_totals.get(t.id, 0)
        return d.occurrence.get(t.id, 0)

    def property_ids(self, uri: str) -> list[int]:
        d = self.kb.properties
        t = d.forward.get(uri)
        if t is None:
            return []
        if self.reasoning:
            return d.ids_in(d.intervals_of(uri))
        return [t.id]

    def distinct_subjects(self, pid: int) -> int:
        n = 0
        for chain in (self.kb.objects, self.kb.datatypes):
            i = chain.property_index(pid)
            if i is not None:
                a, b = chain.subject_range(i, i + 1)
                n += b - a
        return n

    def distinct_objects(self, pid: int) -> int:
        hit = self._distinct_obj.get(pid)
        if hit is None:
            hit = 0
            ch = self.kb.objects
            i = ch.property_index(pid)
            if i is not None:
                a, b = ch.object_range(*ch.subject_range(i, i + 1))
                hit += len(np.unique(ch.o_wt.extract(a, b)))
            dt = self.kb.datatypes
            i = dt.property_index(pid)
            if i is not None:
                a, b = dt.object_range(*dt.subject_range(i, i + 1))
                canon = dt.literals.canonical_array()
                hit += len(set(canon[a:b]))
            self._distinct_obj[pid] = hit
        return hit

    def estimate(self, tp: TriplePattern) -> float:
        kb = self.kb
        if isinstance(tp.p, Var):
            return float(len(kb.objects) + len(kb.datatypes) + len(kb.types))
        if tp.is_type:
            if isinstance(tp.o, Var):
                total = len(kb.types) + (len(kb.inferred_types) if self.reasoning else 0)
                if not isinstance(tp.s, Var):
                    return total / max(1, len(kb.types.by_subject))
                return float(total)
            return float(self.concept_count(tp.o.value))
        pids = self.property_ids(tp.p.value)
        count = sum(kb.count_predicate(p) for p in pids)
        if not count:
            return 0.0
        if not isinstance(tp.s, Var):
            return count / max(1, sum(self.distinct_subjects(p) for p in pids))
        if not isinstance(tp.o, Var):
            return count / max(1, sum(self.distinct_objects(p) for p in pids))
        return float(count)


@dataclass
class PlanStep:
    index: int                     # position in the source query
    tp: TriplePattern
    access: str
    strategy: str                  # scan | merge | nested-loop
    join_var: str | None = None
    estimate: float | None = None    # skipped for single-TP queries
    concept_intervals: tuple[IdInterval, ...] | None = None
    property_intervals: tuple[IdInterval, ...] | None = None
    constraint: RangeConstraint | None = None

    def describe(self) -> str:
        out = f"tp{self.index + 1} {self.tp.n3()} access={self.access} join={self.strategy}"
        if self.join_var:
            out += f" on ?{self.join_var}"
        if self.concept_intervals:
            out += " concepts=" + ",".join(f"[{i.lower},{i.upper})" for i in self.concept_intervals)
        if self.property_intervals:
            out += " properties=" + ",".join(f"[{i.lower},{i.upper})"
                                             for i in self.property_intervals)
        if self.estimate is not None:
            out += f" est={self.estimate:g}"
        return out


@dataclass
class JoinPlan:
    query: Query
    steps: list[PlanStep]
    reasoning: bool = False

    @property
    def order(self) -> list[int]:
        return [s.index for s in self.steps]

    def explain(self) -> str:
        head = f"plan ({'reasoning' if self.reasoning else 'no reasoning'}):"
        return "\n".join([head] + [f"  {k + 1}. {s.describe()}" for k, s in enumerate(self.steps)])


def _rank_key(g: QueryGraph, i: int, placed, est, prefix_card):
    tp = g.patterns[i]
    if placed:
        labels = [g.label(i, j) for j in placed]
    else:
        labels = [lab for _, lab in g.neighbours(i)]
    labels = [lab for lab in labels if lab]
    join = min((_JOIN_RANK[lab] for lab in labels), default=2)
    e = est[i]
    if prefix_card is not None:
        e = min(e, prefix_card)
    return (shape_rank(tp), join, e, i)


def get_most_selective(g: QueryGraph, candidates, placed, est, prefix_card=None) -> int:
    return min(candidates, key=lambda i: _rank_key(g, i, placed, est, prefix_card))


def order_tps(g: QueryGraph, est) -> list[int]:
    """Seed with a selective rdf:type TP having an SS join, then grow greedily."""
    n = len(g.patterns)
    if n == 0:
        return []
    typed = [i for i in range(n) if g.patterns[i].is_type
             and any(lab == SS for _, lab in g.neighbours(i))]
    seed = get_most_selective(g, typed or range(n), [], est)
    order = [seed]
    card = est[seed]
    while len(order) < n:
        cands = {j for i in order for j, _ in g.neighbours(i)} - set(order)
        nxt = get_most_selective(g, sorted(cands), order, est, card)
        order.append(nxt)
        card = min(card, est[nxt])
    return order


def rewrite_for_reasoning(plan: JoinPlan, kb) -> JoinPlan:
    """Attach LiteMat intervals to hierarchy constants; a no-op without reasoning."""
    if not plan.reasoning:
        return plan
    for step in plan.steps:
        tp = step.tp
        if isinstance(tp.p, Var):
            continue
        if tp.is_type:
            if isinstance(tp.o, IRI):
                ivs = kb.concept_intervals(tp.o.value, True)
                step.concept_intervals = tuple(ivs or ())
                var = tp.s.name if isinstance(tp.s, Var) else None
                step.constraint = RangeConstraint(var or "_", step.concept_intervals)
        else:
            ivs = kb.property_intervals(tp.p.value, True)
            step.property_intervals = tuple(ivs or ())
    return plan


def statistics_for(kb, reasoning: bool) -> Statistics:
    """Per-KB cached :class:`Statistics` (the KB is immutable)."""
    cache = getattr(kb, "_stats_cache", None)
    if cache is None:
        return Statistics(kb, reasoning)
    if reasoning not in cache:
        cache[reasoning] = Statistics(kb, reasoning)
    return cache[reasoning]


def plan_query(query: Query, kb, reasoning: bool | None = None, order=None) -> JoinPlan:
    """Order the TPs and choose access method / join strategy per step.

    ``order`` forces a TP permutation (must keep every prefix connected).
    """
    reasoning = query.reasoning if reasoning is None else reasoning
    g = build_query_graph(query)
    if len(g.patterns) == 1:
        est = [None]   # nothing to order
    else:
        stats = statistics_for(kb, reasoning)
        est = [stats.estimate(tp) for tp in g.patterns]
    if order is None:
        order = order_tps(g, est)
    else:
        order = list(order)
        if sorted(order) != list(range(len(g.patterns))):
            raise ValueError("order must be a permutation of the query's TPs")
        for k in range(1, len(order)):
            if not any(g.label(order[k], j) for j in order[:k]):
                raise ValueError("order leaves a TP disconnected from its prefix")
    steps = []
    bound: set[str] = set()
    sorted_by = None
    for k, i in enumerate(order):
        tp = g.patterns[i]
        acc = access_method(tp)
        tvars = tp.variables()
        shared = [v for v in tvars if v in bound]
        subj = tp.s.name if isinstance(tp.s, Var) else None
        if k == 0:
            strategy, jv = "scan", None
            # free-subject scans with a fixed predicate come back ascending on ?s
            if subj and acc in (TYPE_O, PO, P) and tvars.count(subj) == 1 \
                    and not (isinstance(tp.o, Var) and tp.o.name == subj):
                sorted_by = subj
        elif (sorted_by and shared == [sorted_by] and subj == sorted_by
              and acc in (TYPE_O, PO, P) and not (isinstance(tp.o, Var) and tp.o.name == subj)):
            strategy, jv = "merge", subj
        else:
            strategy, jv = "nested-loop", None
        steps.append(PlanStep(i, tp, acc, strategy, jv, est[i]))
        bound.update(tvars)
    return rewrite_for_reasoning(JoinPlan(query, steps, reasoning), kb)
