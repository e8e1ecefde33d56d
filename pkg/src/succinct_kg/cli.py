"""Command-line entry point: ``skg build | query | bench | stats``.

Exit codes are a stable contract: 0 success, 1 I/O or parse problem,
2 unsupported query feature, 3 data integrity (corrupt image, bad ontology).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import statistics
import sys
import time
from dataclasses import dataclass, field

import psutil

from .errors import SuccinctKGError
from .executor import run_query
from .litemat import OntologyGraph
from .parser import parse_ntriples, parse_ontology, parse_query
from .store import KnowledgeBase
from .terms import Literal

EXIT_OK, EXIT_IO, EXIT_UNSUPPORTED, EXIT_INTEGRITY = 0, 1, 2, 3


class UsageError(SuccinctKGError):
    exit_code = EXIT_IO


@dataclass
class RunConfig:
    subcommand: str
    data: list[str] = field(default_factory=list)
    ontology: str | None = None
    store: list[str] = field(default_factory=list)
    queries: list[str] = field(default_factory=list)
    reasoning: bool = False
    explain: bool = False
    repeat: int = 1
    fmt: str = "tsv"

    def validate(self):
        if self.repeat < 1:
            raise UsageError("--repeat must be at least 1")
        if self.subcommand == "build":
            if len(self.data) != 1 or len(self.store) != 1:
                raise UsageError("build needs exactly one --data and one --store")
        elif self.subcommand in ("query", "stats"):
            if len(self.data) + len(self.store) != 1:
                raise UsageError(f"{self.subcommand} needs exactly one --data or --store")
        elif self.subcommand == "bench":
            if not (self.data or self.store):
                raise UsageError("bench needs at least one --data or --store")
        if self.subcommand in ("query", "bench") and not self.queries:
            raise UsageError(f"{self.subcommand} needs --query or --query-file")
        if self.subcommand == "query" and len(self.queries) != 1:
            raise UsageError("query takes a single query")
        # a persisted image carries its dictionaries; raw data needs the ontology
        if self.reasoning and self.data and not self.ontology and not self.store:
            raise UsageError("--reasoning over --data requires --ontology")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # argparse's default exit status 2 would collide with "unsupported"
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="skg", description="Succinct self-indexed RDF store.")
    sub = ap.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    def common(p, multi=False):
        p.add_argument("--ontology", metavar="PATH", help="rho-df ontology (N-Triples)")
        p.add_argument("--data", metavar="PATH", action="append", default=[],
                       help="instance data (N-Triples)" + (", repeatable" if multi else ""))
        p.add_argument("--store", metavar="PATH", action="append", default=[],
                       help="store image" + (", repeatable" if multi else ""))
        p.add_argument("--format", dest="fmt", choices=["tsv", "csv", "json"], default="tsv")

    b = sub.add_parser("build", help="encode data and persist a store image")
    common(b)

    for name, multi in (("query", False), ("bench", True)):
        q = sub.add_parser(name, help="run a query" if name == "query"
                           else "time build and queries, CSV report")
        common(q, multi)
        q.add_argument("--query", dest="query_text", action="append", default=[], metavar="STR")
        q.add_argument("--query-file", action="append", default=[], metavar="PATH")
        q.add_argument("--reasoning", action="store_true")
        q.add_argument("--repeat", type=int, default=1, metavar="N")
        if name == "query":
            q.add_argument("--explain", action="store_true")

    s = sub.add_parser("stats", help="counts and byte sizes of a store")
    common(s)
    return ap


def _read(path) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from None
    except UnicodeDecodeError as exc:
        raise UsageError(f"{path}: not UTF-8 ({exc.reason})") from None


def config_from_args(args) -> RunConfig:
    queries = list(getattr(args, "query_text", []) or [])
    queries += [_read(p) for p in getattr(args, "query_file", []) or []]
    cfg = RunConfig(args.subcommand, list(args.data), args.ontology, list(args.store), queries,
                    getattr(args, "reasoning", False), getattr(args, "explain", False),
                    getattr(args, "repeat", 1), args.fmt)
    cfg.validate()
    return cfg


def load_ontology(path) -> OntologyGraph | None:
    return parse_ontology(_read(path), source=path) if path else None


def build_kb(data_path, ontology_path=None) -> KnowledgeBase:
    triples = parse_ntriples(_read(data_path), source=data_path)
    return KnowledgeBase.from_triples(triples, load_ontology(ontology_path))


def open_kb(cfg: RunConfig, which: int = 0) -> KnowledgeBase:
    if cfg.store and cfg.subcommand != "build":
        try:
            return KnowledgeBase.load(cfg.store[which])
        except OSError as exc:
            raise UsageError(f"cannot read {cfg.store[which]}: {exc.strerror or exc}") from None
    return build_kb(cfg.data[which], cfg.ontology)


def term_text(t) -> str:
    if t is None:
        return ""
    if isinstance(t, Literal):
        return t.lexical
    return t.value


def answer_hash(rows) -> str:
    """Order-insensitive digest of a result multiset."""
    h = hashlib.sha256()
    for line in sorted("\t".join(term_text(t) for t in r) for r in rows):
        h.update(line.encode())
        h.update(b"\n")
    return h.hexdigest()[:16]


def write_table(out, header, rows, fmt):
    if fmt == "json":
        json.dump([dict(zip(header, r)) for r in rows], out, indent=1)
        out.write("\n")
    elif fmt == "csv":
        w = csv.writer(out, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    else:
        out.write("\t".join(header) + "\n")
        for r in rows:
            out.write("\t".join(str(x) for x in r) + "\n")


def timed_query(kb, query, reasoning, repeat):
    """Run ``repeat`` hot runs; timing covers planning and execution only."""
    times, res = [], None
    for _ in range(repeat):
        t0 = time.perf_counter()
        res = run_query(query, kb, reasoning)
        times.append((time.perf_counter() - t0) * 1000)
    return res, times


# -- subcommands ------------------------------------------------------------

def build_report(kb: KnowledgeBase) -> dict:
    st = kb.statistics()
    sz = kb.size_report()
    return {
        "input_triples": st["input_triples"],
        "distinct_triples": st["distinct_triples"],
        "object_triples": st["object_triples"],
        "datatype_triples": st["datatype_triples"],
        "type_triples": st["type_triples"],
        "inferred_type_triples": st["inferred_type_triples"],
        "concepts": st["concepts"],
        "properties": st["properties"],
        "instances": st["instances"],
        "literals": st["literals"],
        "build_seconds": round(kb.report.build_seconds, 6),
        "file_bytes": sz["file_bytes"],
        "header_bytes": sz["header_bytes"],
        "dictionary_bytes": sz["dictionary_bytes"],
        "literal_bytes": sz["literal_bytes"],
        "triple_bytes": sz["triple_bytes"],
        "non_dictionary_bytes": sz["literal_bytes"] + sz["triple_bytes"],
    }


def cmd_build(cfg: RunConfig, out) -> int:
    kb = build_kb(cfg.data[0], cfg.ontology)
    try:
        kb.save(cfg.store[0])
    except OSError as exc:
        raise UsageError(f"cannot write {cfg.store[0]}: {exc.strerror or exc}") from None
    rep = build_report(kb)
    write_table(out, ["key", "value"], list(rep.items()), cfg.fmt)
    return EXIT_OK


def cmd_stats(cfg: RunConfig, out) -> int:
    kb = open_kb(cfg)
    rep = build_report(kb)
    rep.update({f"section_{k}": v for k, v in kb.size_report()["sections"].items()})
    write_table(out, ["key", "value"], list(rep.items()), cfg.fmt)
    return EXIT_OK


def cmd_query(cfg: RunConfig, out, err) -> int:
    kb = open_kb(cfg)
    query = parse_query(cfg.queries[0])
    res, times = timed_query(kb, query, cfg.reasoning or None, cfg.repeat)
    if cfg.explain:
        err.write(res.plan.explain() + "\n")
    rows = [[term_text(t) for t in r] for r in res.rows]
    write_table(out, res.variables, rows, cfg.fmt)
    if cfg.repeat > 1:
        for k, ms in enumerate(times, 1):
            err.write(f"run {k}: {ms:.3f} ms\n")
        err.write(f"median: {statistics.median(times):.3f} ms\n")
    return EXIT_OK


BENCH_COLUMNS = ["dataset", "query", "build_seconds", "triples", "dictionary_bytes",
                 "non_dictionary_bytes", "file_bytes", "rss_bytes", "rows", "median_ms",
                 "answer_hash", "status"]


def cmd_bench(cfg: RunConfig, out) -> int:
    proc = psutil.Process()
    datasets = [("data", p) for p in cfg.data] + [("store", p) for p in cfg.store]
    rows = []
    for kind, path in datasets:
        t0 = time.perf_counter()
        try:
            if kind == "data":
                kb = build_kb(path, cfg.ontology)
            else:
                kb = KnowledgeBase.load(path)
        except (SuccinctKGError, OSError) as exc:
            for qi in range(len(cfg.queries)):
                rows.append([path, qi + 1] + [""] * 9 + [f"error: {exc}"])
            continue
        build_s = time.perf_counter() - t0 if kind == "data" else kb.report.build_seconds
        sz = kb.size_report()
        rss = proc.memory_info().rss   # whole-process resident set, an estimate only
        base = [path, None, round(build_s, 6), kb.report.distinct_triples,
                sz["dictionary_bytes"], sz["literal_bytes"] + sz["triple_bytes"],
                sz["file_bytes"], rss]
        for qi, text in enumerate(cfg.queries):
            row = list(base)
            row[1] = qi + 1
            try:
                res, times = timed_query(kb, parse_query(text), cfg.reasoning or None, cfg.repeat)
                row += [len(res.rows), round(statistics.median(times), 4),
                        answer_hash(res.rows), "ok"]
            except SuccinctKGError as exc:
                row += ["", "", "", f"error: {exc}"]
            rows.append(row)
    w = csv.writer(out, lineterminator="\n")
    w.writerow(BENCH_COLUMNS)
    w.writerows(rows)
    return EXIT_OK


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args = build_parser().parse_args(argv)
        cfg = config_from_args(args)
        if cfg.subcommand == "build":
            return cmd_build(cfg, out)
        if cfg.subcommand == "stats":
            return cmd_stats(cfg, out)
        if cfg.subcommand == "query":
            return cmd_query(cfg, out, err)
        return cmd_bench(cfg, out)
    except SuccinctKGError as exc:
        err.write(f"skg: error: {exc}\n")
        return exc.exit_code


def run(argv=None) -> str:
    """Call :func:`main` and return what it printed (handy in notebooks)."""
    buf = io.StringIO()
    main(argv, buf)
    return buf.getvalue()


if __name__ == "__main__":
    sys.exit(main())
