"""Plan evaluation over a :class:`~succinct_kg.store.KnowledgeBase`.

Bindings are tagged integers ``id << 2 | kind`` so one column can hold
instances, concepts, properties or literals.  Literal bindings use the
canonical literal-table position (first occurrence of an equal term), which
makes id equality coincide with term equality inside every kind.
"""

from __future__ import annotations

import logging
import operator
from dataclasses import dataclass, field

from .errors import IntegrityError, LookupMissError
from .litemat import IdInterval
from .optimizer import JoinPlan, PlanStep, plan_query
from .parser import And, Compare, Not, Or, Query, TriplePattern, Var
from .terms import IRI, BNode, Literal, term_from_key

log = logging.getLogger(__name__)

INST, CONCEPT, PROP, LIT = 0, 1, 2, 3


def tag(id_: int, kind: int) -> int:
    return (int(id_) << 2) | kind


def untag(v: int) -> tuple[int, int]:
    return v >> 2, v & 3


@dataclass
class BindingTable:
    columns: list[str]
    rows: list[tuple]
    sorted_by: str | None = None
    skipped: int = 0

    def __len__(self):
        return len(self.rows)

    def col(self, name: str) -> int:
        return self.columns.index(name)

    def check_sorted(self):
        if self.sorted_by is None or self.sorted_by not in self.columns:
            return
        c = self.col(self.sorted_by)
        rows = self.rows
        for a, b in zip(rows, rows[1:]):
            if a[c] > b[c]:
                raise AssertionError(f"binding table not ascending on ?{self.sorted_by}")


@dataclass
class ExecStats:
    steps: list[tuple[str, int]] = field(default_factory=list)
    skipped_rows: int = 0


class Evaluator:
    """Per-query helper that resolves terms and evaluates single TPs."""

    def __init__(self, kb, reasoning: bool = False):
        self.kb = kb
        self.reasoning = reasoning
        self._terms: dict[int, object] = {}
        self._num: dict[int, float | None] = {}
        self._prop_anc: dict[int, list[int]] = {}
        self._concept_anc: dict[int, list[int]] = {}
        self.type_tag = tag(kb.type_pid, PROP) if kb.type_pid is not None else None

    # -- values --------------------------------------------------------

    def term(self, v: int):
        t = self._terms.get(v)
        if t is None:
            id_, kind = untag(v)
            kb = self.kb
            if kind == INST:
                t = term_from_key(kb.instances.extract(id_))
            elif kind == CONCEPT:
                t = IRI(kb.concepts.extract(id_))
            elif kind == PROP:
                t = IRI(kb.properties.extract(id_))
            else:
                if not 0 <= id_ < len(kb.literals):
                    raise IntegrityError(f"no literal at position {id_}")
                t = kb.literals.term(id_)
            self._terms[v] = t
        return t

    def number(self, v: int):
        if v not in self._num:
            t = self.term(v)
            self._num[v] = t.as_number() if isinstance(t, Literal) else None
        return self._num[v]

    def coerce(self, x, kind: int) -> int | None:
        """Id of ``x`` (a tagged value or a query constant) in ``kind``'s space."""
        if isinstance(x, int):
            if x & 3 == kind:
                return x >> 2
            x = self.term(x)
        kb = self.kb
        if isinstance(x, Literal):
            if kind != LIT:
                return None
            pos = kb.literals.find(x)
            return pos
        if kind == LIT:
            return None
        if kind == INST:
            return kb.instances.get_id(x.key)
        if isinstance(x, BNode):
            return None
        if kind == CONCEPT:
            return kb.concepts.get_id(x.value)
        return kb.properties.get_id(x.value)

    def same(self, a: int, b: int) -> bool:
        if a == b:
            return True
        if a & 3 == b & 3:
            return False
        return self.term(a) == self.term(b)

    # -- hierarchy helpers ---------------------------------------------

    def prop_ancestors(self, pid: int) -> list[int]:
        hit = self._prop_anc.get(pid)
        if hit is None:
            d = self.kb.properties
            hit = sorted(d.forward[u].id for u in d.ancestors(d.extract(pid)))
            self._prop_anc[pid] = hit
        return hit

    def concept_ancestors(self, cid: int) -> list[int]:
        hit = self._concept_anc.get(cid)
        if hit is None:
            d = self.kb.concepts
            hit = sorted(d.forward[u].id for u in d.ancestors(d.extract(cid)))
            self._concept_anc[cid] = hit
        return hit

    def property_target(self, p, step: PlanStep | None):
        """Store argument for a bound predicate: an id or a list of intervals."""
        if step is not None and step.property_intervals is not None and not isinstance(p, int):
            return list(step.property_intervals) or None
        pid = self.coerce(p, PROP)
        if pid is None:
            return None
        if self.reasoning:
            return self.kb.properties.intervals_of(self.kb.properties.extract(pid))
        return pid

    def concept_target(self, c, step: PlanStep | None):
        if step is not None and step.concept_intervals is not None and not isinstance(c, int):
            return list(step.concept_intervals) or None
        cid = self.coerce(c, CONCEPT)
        if cid is None:
            return None
        if self.reasoning:
            return self.kb.concepts.intervals_of(self.kb.concepts.extract(cid))
        return cid

    # -- single TP -----------------------------------------------------

    def match(self, tp: TriplePattern, s=None, p=None, o=None, step=None) -> list[tuple]:
        """All ``(s, p, o)`` tagged triples matching ``tp`` with the given bindings.

        ``s``/``p``/``o`` are tagged values, query constants, or ``None``
        for a free position.  Results are distinct; with a free subject and a
        fixed predicate they come back ascending on the subject.
        """
        if p is None:
            return self._match_var_pred(s, o)
        if self.type_tag is not None and (p == self.type_tag or
                                          (not isinstance(p, int) and p == IRI_TYPE)):
            return self._match_type(s, o, step)
        target = self.property_target(p, step)
        if target is None:
            return []
        ptag = p if isinstance(p, int) else tag(self.coerce(p, PROP), PROP)
        return [(a, ptag, b) for a, b in self._match_prop(s, target, o)]

    def _match_prop(self, s, target, o) -> list[tuple[int, int]]:
        kb = self.kb
        out = []
        multi = not isinstance(target, int)
        canon = kb.literals.canonical_array() if len(kb.literals) else []
        if s is not None:
            sid = self.coerce(s, INST)
            if sid is None:
                return []
            stag = s if isinstance(s, int) and s & 3 == INST else tag(sid, INST)
            if o is not None:
                oid = self.coerce(o, INST)
                if oid is not None and oid in kb.objects.eval_sp(sid, target):
                    return [(stag, o if isinstance(o, int) else tag(oid, INST))]
                lid = self.coerce(o, LIT)
                if lid is not None and any(canon[i] == lid for i in
                                           kb.datatypes.eval_datatype(sid, target)):
                    return [(stag, o if isinstance(o, int) else tag(lid, LIT))]
                return []
            out = [(stag, tag(x, INST)) for x in kb.objects.eval_sp(sid, target)]
            lits = [canon[i] for i in kb.datatypes.eval_datatype(sid, target)]
            if multi:
                lits = sorted(set(lits))
            out.extend((stag, tag(x, LIT)) for x in lits)
            return out
        if o is not None:
            oid = self.coerce(o, INST)
            if oid is not None:
                otag = o if isinstance(o, int) else tag(oid, INST)
                out = [(tag(x, INST), otag) for x in kb.objects.eval_po(target, oid)]
            lid = self.coerce(o, LIT)
            if lid is not None:
                otag = o if isinstance(o, int) else tag(lid, LIT)
                ss, pos = kb.datatypes.eval_p(target)
                subs = sorted({a for a, i in zip(ss.tolist(), pos.tolist()) if canon[i] == lid})
                out = _merge_sorted(out, [(tag(a, INST), otag) for a in subs])
            return out
        ss, oo = kb.objects.eval_p(target)
        out = [(tag(a, INST), tag(b, INST)) for a, b in zip(ss.tolist(), oo.tolist())]
        ss, pos = kb.datatypes.eval_p(target)
        if len(ss):
            dt = [(tag(a, INST), tag(canon[i], LIT)) for a, i in zip(ss.tolist(), pos.tolist())]
            if multi:
                dt = sorted(set(dt))
            out = _merge_sorted(out, dt)
        return out

    def _subject_concepts(self, sid: int) -> list[int]:
        cs = self.kb.type_concepts(sid, self.reasoning)
        if self.reasoning:
            cs = sorted({a for c in cs for a in self.concept_ancestors(c)})
        return cs

    def _match_type(self, s, o, step) -> list[tuple]:
        kb = self.kb
        tt = self.type_tag
        if o is not None:
            target = self.concept_target(o, step)
            if target is None:
                return []
            otag = o if isinstance(o, int) and o & 3 == CONCEPT else tag(self.coerce(o, CONCEPT), CONCEPT)
            if s is not None:
                sid = self.coerce(s, INST)
                if sid is None:
                    return []
                if isinstance(target, int):
                    ok = target in kb.type_concepts(sid, False)
                else:
                    ok = any(iv.lower <= c < iv.upper for c in kb.type_concepts(sid, True)
                             for iv in target)
                return [(s if isinstance(s, int) else tag(sid, INST), tt, otag)] if ok else []
            return [(tag(x, INST), tt, otag) for x in kb.type_subjects(target, self.reasoning)]
        if s is not None:
            sid = self.coerce(s, INST)
            if sid is None:
                return []
            stag = s if isinstance(s, int) else tag(sid, INST)
            return [(stag, tt, tag(c, CONCEPT)) for c in self._subject_concepts(sid)]
        subjects = set(kb.types.by_subject)
        if self.reasoning:
            subjects |= set(kb.inferred_types.by_subject)
        return [(tag(x, INST), tt, tag(c, CONCEPT))
                for x in sorted(subjects) for c in self._subject_concepts(x)]

    def _match_var_pred(self, s, o) -> list[tuple]:
        kb = self.kb
        out = []
        pids = sorted(set(kb.objects.properties) | set(kb.datatypes.properties))
        for pid in pids:
            pairs = self._match_prop(s, pid, o)
            if not pairs:
                continue
            ptags = ([tag(q, PROP) for q in self.prop_ancestors(pid)] if self.reasoning
                     else [tag(pid, PROP)])
            for a, b in pairs:
                for pt in ptags:
                    out.append((a, pt, b))
        if self.reasoning:
            out = list(dict.fromkeys(out))
        if self.type_tag is not None:
            if o is None or self.coerce(o, CONCEPT) is not None:
                out.extend(self._match_type(s, o, None))
        return out


IRI_TYPE = IRI("http://www.w3.org/1999/02/22-rdf-syntax-ns#type")


def _merge_sorted(a, b):
    if not a:
        return b
    if not b:
        return a
    return sorted(a + b)


# ---------------------------------------------------------------------------
# joins
# ---------------------------------------------------------------------------

def _tp_slots(tp: TriplePattern):
    return [(pos, t) for pos, t in enumerate((tp.s, tp.p, tp.o))]


def _extend(ev: Evaluator, tp: TriplePattern, table: BindingTable, step=None):
    """New column names and, per row, the list of value tuples to append."""
    new_cols = []
    for t in (tp.s, tp.p, tp.o):
        if isinstance(t, Var) and t.name not in table.columns and t.name not in new_cols:
            new_cols.append(t.name)
    return new_cols


def _bind_args(tp, row_lookup):
    args = []
    for t in (tp.s, tp.p, tp.o):
        if isinstance(t, Var):
            args.append(row_lookup(t.name))
        else:
            args.append(t)
    return args


def _accept(ev: Evaluator, tp: TriplePattern, triple, new_cols) -> tuple | None:
    """Values for ``new_cols`` from a matched triple; ``None`` on a repeated-var clash."""
    vals: dict[str, int] = {}
    for t, v in zip((tp.s, tp.p, tp.o), triple):
        if isinstance(t, Var):
            cur = vals.get(t.name)
            if cur is None:
                vals[t.name] = v
            elif not ev.same(cur, v):
                return None
    return tuple(vals[c] for c in new_cols)


def scan(ev: Evaluator, tp: TriplePattern, step=None) -> BindingTable:
    cols = _extend(ev, tp, BindingTable([], []))
    args = [None if isinstance(t, Var) else t for t in (tp.s, tp.p, tp.o)]
    rows = []
    for triple in ev.match(tp, *args, step=step):
        r = _accept(ev, tp, triple, cols)
        if r is not None:
            rows.append(r)
    return BindingTable(cols, rows)


def nested_loop_join(ev: Evaluator, left: BindingTable, tp: TriplePattern, step=None
                     ) -> BindingTable:
    """Substitute each row's bindings into ``tp`` and probe the store."""
    new_cols = _extend(ev, tp, left)
    cols = left.columns + new_cols
    index = {c: i for i, c in enumerate(left.columns)}
    bound = [t.name for t in (tp.s, tp.p, tp.o) if isinstance(t, Var) and t.name in index]
    cache: dict[tuple, list[tuple]] = {}
    out = []
    for row in left.rows:
        key = tuple(row[index[v]] for v in bound)
        ext = cache.get(key)
        if ext is None:
            args = _bind_args(tp, lambda n: row[index[n]] if n in index else None)
            ext = []
            for triple in ev.match(tp, *args, step=step):
                r = _accept(ev, tp, triple, new_cols)
                if r is not None:
                    ext.append(r)
            cache[key] = ext
        for r in ext:
            out.append(row + r)
    return BindingTable(cols, out, left.sorted_by)


def merge_join(left: BindingTable, right: BindingTable, var: str) -> BindingTable:
    """Sorted-merge equi-join on ``var``; both inputs ascending on it."""
    if left.sorted_by != var:
        raise AssertionError(f"left input not sorted on ?{var}")
    if __debug__:
        left.check_sorted()
        BindingTable(right.columns, right.rows, var).check_sorted()
    li, ri = left.col(var), right.col(var)
    extra = [k for k, c in enumerate(right.columns) if c not in left.columns]
    cols = left.columns + [right.columns[k] for k in extra]
    a, b = left.rows, right.rows
    i = j = 0
    out = []
    while i < len(a) and j < len(b):
        x, y = a[i][li], b[j][ri]
        if x < y:
            i += 1
        elif x > y:
            j += 1
        else:
            i2 = i
            while i2 < len(a) and a[i2][li] == x:
                i2 += 1
            j2 = j
            while j2 < len(b) and b[j2][ri] == x:
                j2 += 1
            for ra in a[i:i2]:
                for rb in b[j:j2]:
                    out.append(ra + tuple(rb[k] for k in extra))
            i, j = i2, j2
    return BindingTable(cols, out, var)


# ---------------------------------------------------------------------------
# filters
# ---------------------------------------------------------------------------

_OPS = {"<": operator.lt, ">": operator.gt, "<=": operator.le, ">=": operator.ge,
        "=": operator.eq, "!=": operator.ne}


class FilterEval:
    def __init__(self, ev: Evaluator, columns):
        self.ev = ev
        self.index = {c: i for i, c in enumerate(columns)}
        self.skipped = 0

    def __call__(self, expr, row) -> bool:
        if isinstance(expr, And):
            return all(self(a, row) for a in expr.args)
        if isinstance(expr, Or):
            return any(self(a, row) for a in expr.args)
        if isinstance(expr, Not):
            return not self(expr.arg, row)
        if isinstance(expr, RangeFilter):
            i = self.index.get(expr.variable)
            if i is None:
                return False
            id_, _ = untag(row[i])
            return any(iv.lower <= id_ < iv.upper for iv in expr.intervals)
        return self.compare(expr, row)

    def _operand(self, t, row):
        if isinstance(t, Var):
            i = self.index.get(t.name)
            if i is None:
                return None, None
            v = row[i]
            return self.ev.term(v), self.ev.number(v)
        return t, (t.as_number() if isinstance(t, Literal) else None)

    def compare(self, e: Compare, row) -> bool:
        lt, ln = self._operand(e.left, row)
        rt, rn = self._operand(e.right, row)
        if lt is None or rt is None:
            return False
        if ln is not None and rn is not None:
            return _OPS[e.op](ln, rn)
        if e.op in ("=", "!="):
            return _OPS[e.op](_lexical(lt), _lexical(rt))
        self.skipped += 1
        return False


def _lexical(t):
    return t.lexical if isinstance(t, Literal) else ("iri", t.key)


@dataclass(frozen=True)
class RangeFilter:
    """``?v >= lower && ?v < upper`` on raw ids, OR-ed over intervals."""
    variable: str
    intervals: tuple[IdInterval, ...]

    def variables(self):
        return {self.variable}


def apply_filter(table: BindingTable, expr, ev: Evaluator) -> BindingTable:
    fe = FilterEval(ev, table.columns)
    rows = [r for r in table.rows if fe(expr, r)]
    return BindingTable(table.columns, rows, table.sorted_by, table.skipped + fe.skipped)


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def execute(plan: JoinPlan, kb, stats: ExecStats | None = None) -> BindingTable:
    ev = Evaluator(kb, plan.reasoning)
    pending = list(plan.query.filters)
    table = None
    for step in plan.steps:
        tp = step.tp
        if table is None:
            table = scan(ev, tp, step)
            if step.access in ("type(?s,C)", "?po", "?p?") and isinstance(tp.s, Var):
                table.sorted_by = tp.s.name
        elif step.strategy == "merge" and table.sorted_by == step.join_var:
            right = scan(ev, tp, step)
            table = merge_join(table, right, step.join_var)
        else:
            table = nested_loop_join(ev, table, tp, step)
        if __debug__:
            table.check_sorted()
        bound = set(table.columns)
        still = []
        for f in pending:
            if f.variables() <= bound:
                table = apply_filter(table, f, ev)
            else:
                still.append(f)
        pending = still
        if stats is not None:
            stats.steps.append((step.describe(), len(table)))
        if not table.rows:
            break
    if table is None:
        table = BindingTable([], [()])
    for f in pending:
        table = apply_filter(table, f, ev)
    # unreached patterns still contribute their columns (empty result)
    for step in plan.steps:
        for v in step.tp.variables():
            if v not in table.columns:
                table.columns.append(v)
                table.rows = [r + (None,) for r in table.rows]
    if stats is not None:
        stats.skipped_rows += table.skipped
    table.evaluator = ev
    return table


def decode(table: BindingTable, kb, variables=None, distinct: bool = False,
           evaluator: Evaluator | None = None) -> list[tuple]:
    """Rows of RDF terms for ``variables`` (``None`` where unbound)."""
    ev = evaluator or getattr(table, "evaluator", None) or Evaluator(kb)
    variables = list(table.columns if variables is None else variables)
    idx = [table.columns.index(v) if v in table.columns else None for v in variables]
    out = []
    for r in table.rows:
        row = []
        for i in idx:
            v = None if i is None else r[i]
            if v is None:
                row.append(None)
            else:
                try:
                    row.append(ev.term(v))
                except LookupMissError as exc:
                    raise IntegrityError(f"undecodable binding: {exc}") from None
        out.append(tuple(row))
    if distinct:
        out = list(dict.fromkeys(out))
    return out


@dataclass
class QueryResult:
    variables: list[str]
    rows: list[tuple]
    plan: JoinPlan
    stats: ExecStats


def run_query(query: Query, kb, reasoning: bool | None = None, order=None) -> QueryResult:
    plan = plan_query(query, kb, reasoning, order)
    stats = ExecStats()
    table = execute(plan, kb, stats)
    names = query.output_variables()
    rows = decode(table, kb, names, query.distinct)
    return QueryResult(names, rows, plan, stats)
