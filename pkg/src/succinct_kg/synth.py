"""Deterministic university-domain graph generator (LUBM-like) for benchmarks."""

from __future__ import annotations

import random

from .litemat import OntologyGraph
from .parser import RawTriple, format_ntriples
from .terms import IRI, RDF_TYPE, RDFS_DOMAIN, RDFS_RANGE, RDFS_SUBCLASSOF, RDFS_SUBPROPERTYOF, Literal

NS = "http://swat.cse.lehigh.edu/onto/univ-bench.owl#"
PREFIX = f"PREFIX ub: <{NS}>\n"

CLASSES = [
    ("Employee", "Person"), ("Faculty", "Employee"), ("Professor", "Faculty"),
    ("FullProfessor", "Professor"), ("AssociateProfessor", "Professor"),
    ("AssistantProfessor", "Professor"), ("Lecturer", "Faculty"),
    ("Student", "Person"), ("GraduateStudent", "Student"),
    ("UndergraduateStudent", "Student"), ("Department", "Organization"),
    ("University", "Organization"), ("ResearchGroup", "Organization"),
    ("GraduateCourse", "Course"), ("Course", "Work"), ("Publication", "Work"),
]
PROPERTIES = [
    ("worksFor", "memberOf"), ("headOf", "worksFor"),
    ("undergraduateDegreeFrom", "degreeFrom"), ("mastersDegreeFrom", "degreeFrom"),
    ("doctoralDegreeFrom", "degreeFrom"),
]
DOMAIN_RANGE = [
    ("teacherOf", "Faculty", "Course"), ("takesCourse", "Student", "Course"),
    ("advisor", "Person", "Professor"), ("publicationAuthor", "Publication", "Person"),
    ("subOrganizationOf", "Organization", "Organization"), ("degreeFrom", "Person", "University"),
    ("memberOf", "Person", "Organization"), ("headOf", None, "Department"),
]
DATATYPE = ["name", "emailAddress", "telephone", "researchInterest"]


def ub(local: str) -> IRI:
    return IRI(NS + local)


def ontology() -> OntologyGraph:
    g = OntologyGraph()
    for c, p in CLASSES:
        g.add_subclass(NS + c, NS + p)
    for c, p in PROPERTIES:
        g.add_subproperty(NS + c, NS + p)
    for p, d, r in DOMAIN_RANGE:
        g.property_parents.setdefault(NS + p, set())
        if d:
            g.domain_of.setdefault(NS + p, set()).add(NS + d)
        if r:
            g.range_of.setdefault(NS + p, set()).add(NS + r)
    return g


def ontology_ntriples() -> str:
    lines = []
    for c, p in CLASSES:
        lines.append(f"<{NS}{c}> <{RDFS_SUBCLASSOF}> <{NS}{p}> .")
    for c, p in PROPERTIES:
        lines.append(f"<{NS}{c}> <{RDFS_SUBPROPERTYOF}> <{NS}{p}> .")
    for p, d, r in DOMAIN_RANGE:
        if d:
            lines.append(f"<{NS}{p}> <{RDFS_DOMAIN}> <{NS}{d}> .")
        if r:
            lines.append(f"<{NS}{p}> <{RDFS_RANGE}> <{NS}{r}> .")
    return "\n".join(lines) + "\n"


def generate(n_triples: int, seed: int = 0) -> list[RawTriple]:
    """About ``n_triples`` triples (exactly, after truncation) of university data."""
    rng = random.Random(seed)
    out: list[RawTriple] = []
    typ = IRI(RDF_TYPE)

    def add(s, p, o):
        out.append(RawTriple(s, p if isinstance(p, IRI) else ub(p), o))

    def person(base, cls, dept, univs):
        add(base, typ, ub(cls))
        add(base, "name", Literal(base.value.rsplit("/", 1)[-1]))
        add(base, "emailAddress", Literal(base.value.rsplit("/", 1)[-1] + "@example.edu"))
        if rng.random() < 0.5:
            add(base, "telephone", Literal(f"+1-555-{rng.randrange(10000):04d}"))
        add(base, "memberOf" if "Student" in cls else "worksFor", dept)
        add(base, "undergraduateDegreeFrom", rng.choice(univs))

    u = 0
    univs = [IRI(f"http://www.University{i}.edu") for i in range(50)]
    while len(out) < n_triples:
        univ = univs[u % len(univs)]
        add(univ, typ, ub("University"))
        add(univ, "name", Literal(f"University{u}"))
        for d in range(rng.randint(3, 6)):
            dept = IRI(f"http://www.Department{d}.University{u}.edu")
            add(dept, typ, ub("Department"))
            add(dept, "subOrganizationOf", univ)
            add(dept, "name", Literal(f"Department{d}"))
            courses = []
            for c in range(rng.randint(8, 14)):
                course = IRI(f"{dept.value}/Course{c}")
                courses.append(course)
                add(course, typ, ub("GraduateCourse" if c % 3 == 0 else "Course"))
                add(course, "name", Literal(f"Course{c}"))
            faculty = []
            for k, cls in enumerate(["FullProfessor"] * 2 + ["AssociateProfessor"] * 3 +
                                    ["AssistantProfessor"] * 3 + ["Lecturer"] * 2):
                f = IRI(f"{dept.value}/{cls}{k}")
                faculty.append(f)
                person(f, cls, dept, univs)
                add(f, "doctoralDegreeFrom", rng.choice(univs))
                add(f, "researchInterest", Literal(f"Research{rng.randrange(30)}"))
                for c in rng.sample(courses, 2):
                    add(f, "teacherOf", c)
                for p in range(rng.randint(1, 4)):
                    pub = IRI(f"{f.value}/Publication{p}")
                    add(pub, typ, ub("Publication"))
                    add(pub, "publicationAuthor", f)
            add(faculty[0], "headOf", dept)
            profs = [f for f in faculty if "Professor" in f.value]
            for s in range(rng.randint(20, 40)):
                grad = s % 4 == 0
                st = IRI(f"{dept.value}/{'GraduateStudent' if grad else 'UndergraduateStudent'}{s}")
                person(st, "GraduateStudent" if grad else "UndergraduateStudent", dept, univs)
                for c in rng.sample(courses, rng.randint(2, 4)):
                    add(st, "takesCourse", c)
                if grad or rng.random() < 0.2:
                    add(st, "advisor", rng.choice(profs))
            if len(out) >= n_triples:
                break
        u += 1
    return out[:n_triples]


def write_dataset(path_data, path_onto, n_triples: int, seed: int = 0):
    with open(path_data, "w", encoding="utf-8") as fh:
        fh.write(format_ntriples(generate(n_triples, seed)))
    with open(path_onto, "w", encoding="utf-8") as fh:
        fh.write(ontology_ntriples())
