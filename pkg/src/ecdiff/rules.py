"""Inference rules for happens-before and read-from reasoning, ranks 1 to 3."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import networkx as nx

from .datalog import ANY, Database, Relation, RuleProgram, evaluate, neq, paused_gc, rule, variables
from .errors import InvariantViolation
from .facts import BASE_RELATIONS, FactBase, extract_facts
from .frontend import Program

log = logging.getLogger(__name__)

_R = {name: Relation(name, arity) for name, arity in BASE_RELATIONS.items()}
St, Po, Dom, PostDom, LoopReach = _R["St"], _R["Po"], _R["Dom"], _R["PostDom"], _R["LoopReach"]
ThrdCreate, ThrdJoin = _R["ThrdCreate"], _R["ThrdJoin"]
Load, Store, Access = _R["Load"], _R["Store"], _R["Access"]
SameCS, DiffCS = _R["SameCS"], _R["DiffCS"]
GuardedSignalWait, WaitGuard, AdhocOrder = _R["GuardedSignalWait"], _R["WaitGuard"], _R["AdhocOrder"]

Precedes = Relation("Precedes", 2)
MustHb = Relation("MustHb", 2)
MayHb = Relation("MayHb", 2)
CoveredStore = Relation("CoveredStore", 3)
CoveredLoad = Relation("CoveredLoad", 3)
NoRf = Relation("NoRf", 3)
MayRf = Relation("MayRf", 3)
NoRfs = Relation("NoRfs", 6)
MayRfs = Relation("MayRfs", 6)
RfCandidate = Relation("RfCandidate", 4)
RfPair = Relation("RfPair", 2)
EdgeBefore = Relation("EdgeBefore", 2)
NoRfs3 = Relation("NoRfs3", 3)
MayRfs3 = Relation("MayRfs3", 3)

s1, s2, s3, s4, s5, s6, t, w, g, c, j = variables("s1 s2 s3 s4 s5 s6 t w g c j")
th1, th2, v, v2, v3, l = variables("th1 th2 v v2 v3 l")
e1, e2, e3 = variables("e1 e2 e3")


def rank1_rules(access_restriction: bool = True) -> RuleProgram:
    # Precedes(a, b): whenever b executes, a has executed earlier. It is the
    # causal core of MustHb and is what makes chaining orders safe when the
    # middle statement sits on a branch that may be skipped.
    precedes = [
        rule(Precedes(s1, s2), Dom(s1, s2)),
        rule(Precedes(c, s2), ThrdCreate(ANY, c, th2), St(s2, th2)),
        rule(Precedes(s1, t), AdhocOrder(s1, w), Dom(w, t)),
        rule(Precedes(s1, w), GuardedSignalWait(s1, w)),
        rule(Precedes(s1, t), GuardedSignalWait(s1, w), WaitGuard(g, w), Dom(g, t)),
        rule(Precedes(s1, s3), Precedes(s1, s2), Precedes(s2, s3)),
    ]
    must = [
        rule(MustHb(s1, s2), Po(s1, s2)),
        rule(MustHb(c, s2), ThrdCreate(ANY, c, th2), St(s2, th2)),
        rule(MustHb(s2, j), ThrdJoin(ANY, j, th2), St(s2, th2)),
        rule(MustHb(s1, w), GuardedSignalWait(s1, w)),
        rule(MustHb(s1, t), AdhocOrder(s1, w), Dom(w, t)),
        rule(MustHb(s1, t), GuardedSignalWait(s1, w), WaitGuard(g, w), Dom(g, t)),
        rule(MustHb(s1, s3), MustHb(s1, s2), Precedes(s2, s3)),
    ]

    def uni(s):
        return Access(ANY, s) if access_restriction else St(s, ANY)

    may = [
        rule(MayHb(s1, s2), MustHb(s1, s2), uni(s1), uni(s2)),
        rule(MayHb(s1, s2), uni(s1), uni(s2), St(s1, th1), St(s2, th2), neq(th1, th2), ~MustHb(s2, s1)),
        rule(MayHb(s1, s2), LoopReach(s1, s2), uni(s1), uni(s2)),
        rule(MayHb(s1, s3), MayHb(s1, s2), MayHb(s2, s3), neq(s1, s3), ~MustHb(s3, s1)),
    ]
    rf = [
        rule(CoveredStore(s1, v, l), Store(s1, v), Store(s2, v), PostDom(s2, s1), SameCS(s1, s2, l)),
        rule(CoveredLoad(s2, v, l), Store(s1, v), Load(s2, v), Dom(s1, s2), SameCS(s1, s2, l)),
        rule(NoRf(s1, s2, v), Store(s1, v), Store(s3, v), Load(s2, v), MustHb(s1, s3), Precedes(s3, s2), neq(s1, s3)),
        rule(NoRf(s1, s2, v), Store(s1, v), Load(s2, v), MayHb(s1, s2), CoveredLoad(s2, v, l), DiffCS(s1, s2, l)),
        rule(NoRf(s1, s2, v), Store(s1, v), Load(s2, v), MayHb(s1, s2), CoveredStore(s1, v, l), DiffCS(s1, s2, l)),
        rule(MayRf(s1, s2, v), Store(s1, v), Load(s2, v), MayHb(s1, s2), ~NoRf(s1, s2, v)),
    ]
    return RuleProgram(precedes + must + may + rf, dict(BASE_RELATIONS))


def rank2_rules() -> RuleProgram:
    """Ordered pairs of read-from edges; NoRfs(e1, e2) rules out e1 realized before e2."""
    rules = [
        # one load, one value: two different stores for the same load
        rule(NoRfs(s1, s3, v, s2, s3, v), MayRf(s1, s3, v), MayRf(s2, s3, v), neq(s1, s2), ~LoopReach(s3, s3)),
        # cycle with must-happen-before
        rule(NoRfs(s1, s2, v, s3, s4, v2), MayRf(s1, s2, v), MayRf(s3, s4, v2), MustHb(s2, s3), MustHb(s4, s1)),
        # two critical sections would each have to run before the other
        rule(
            NoRfs(s1, s2, v, s3, s4, v),
            MayRf(s1, s2, v), MayRf(s3, s4, v),
            SameCS(s1, s4, l), SameCS(s2, s3, l), DiffCS(s1, s2, l),
            ~LoopReach(s1, s1), ~LoopReach(s2, s2),
        ),
        # the first reader's section overwrites the value before the other section can read it
        rule(
            NoRfs(s1, s2, v, s1, s4, v),
            MayRf(s1, s2, v), MayRf(s1, s4, v),
            Store(s3, v), PostDom(s3, s2), DiffCS(s2, s4, l), SameCS(s2, s3, l),
            ~LoopReach(s1, s1),
        ),
        rule(
            MayRfs(s1, s2, v, s3, s4, v2),
            MayRf(s1, s2, v), MayRf(s3, s4, v2), neq((s1, s2, v), (s3, s4, v2)),
            ~NoRfs(s1, s2, v, s3, s4, v2),
        ),
    ]
    return RuleProgram(rules, {"MayRf": 3, "MustHb": 2, **BASE_RELATIONS})


def rank3_rules() -> RuleProgram:
    # Triples are counted in the millions, so they are built over whole edges:
    # RfCandidate(e, store, load, var) names every same-variable store/load pair.
    pairwise = [RfPair(e1, e2), RfPair(e2, e3), RfPair(e1, e3)]
    rules = [
        rule(RfPair(e1, e2), MayRfs(s1, s2, v, s3, s4, v2), RfCandidate(e1, s1, s2, v), RfCandidate(e2, s3, s4, v2)),
        # the load of e1 must happen before the store of e2
        rule(EdgeBefore(e1, e2), RfCandidate(e1, ANY, s2, ANY), RfCandidate(e2, s3, ANY, ANY), MustHb(s2, s3)),
        # three edges whose loads each precede the next edge's store, in either direction
        rule(NoRfs3(e1, e2, e3), EdgeBefore(e1, e2), EdgeBefore(e2, e3), EdgeBefore(e3, e1), *pairwise),
        rule(NoRfs3(e1, e2, e3), EdgeBefore(e1, e3), EdgeBefore(e3, e2), EdgeBefore(e2, e1), *pairwise),
        rule(MayRfs3(e1, e2, e3), *pairwise, ~NoRfs3(e1, e2, e3)),
    ]
    return RuleProgram(rules, {"MayRfs": 6, "MustHb": 2, "RfCandidate": 4})


def rf_candidates(facts) -> set[tuple]:
    """RfCandidate facts: one edge value per same-variable store/load pair."""
    loads: dict[str, list[str]] = {}
    for ld, var in facts["Load"]:
        loads.setdefault(var, []).append(ld)
    return {(RfEdge(st, ld, var), st, ld, var) for st, var in facts["Store"] for ld in loads.get(var, ())}


def rules_for_rank(k: int, access_restriction: bool = True) -> RuleProgram:
    rp = rank1_rules(access_restriction)
    if k >= 2:
        rp = rp.extend(rank2_rules())
    if k >= 3:
        rp = rp.extend(rank3_rules())
    return rp


class RfEdge(NamedTuple):
    store: str
    load: str
    var: str

    def __str__(self) -> str:
        return f"({self.store},{self.load})[{self.var}]"


@dataclass(eq=False)
class StaticAbstractTrace:
    rank: int
    may_rf: frozenset[RfEdge]
    sets_by_rank: dict[int, frozenset[tuple[RfEdge, ...]]]  # ordered tuples, lengths 2..rank
    db: Database
    facts: FactBase
    program: Program | None = None
    warnings: list[str] = field(default_factory=list)

    def relation(self, name: str) -> frozenset:
        return self.db.get(name, frozenset())

    @property
    def must_hb(self) -> frozenset:
        return self.relation("MustHb")

    @property
    def may_hb(self) -> frozenset:
        return self.relation("MayHb")

    @property
    def no_rf(self) -> frozenset:
        return self.relation("NoRf")

    @property
    def no_rfs(self) -> frozenset:
        return self.relation("NoRfs")

    @property
    def may_rf_sets(self) -> frozenset[tuple[RfEdge, ...]]:
        return frozenset().union(*self.sets_by_rank.values())

    def tuples(self, k: int) -> frozenset[tuple[RfEdge, ...]]:
        """All ordered k-tuples the analysis allows (k = 1 gives singletons)."""
        if k == 1:
            return frozenset((e,) for e in self.may_rf)
        if k > self.rank:
            raise ValueError(f"trace computed at rank {self.rank}, asked for rank {k}")
        return self.sets_by_rank[k]


def split_edges(flat: tuple, k: int) -> tuple[RfEdge, ...]:
    return tuple(RfEdge(*flat[3 * i: 3 * i + 3]) for i in range(k))


def _split_all(rows: frozenset, k: int, may_rf: frozenset[RfEdge]) -> frozenset[tuple[RfEdge, ...]]:
    edge = {tuple(e): e for e in may_rf}
    with paused_gc():
        return frozenset(tuple(edge[x[3 * i: 3 * i + 3]] for i in range(k)) for x in rows)


def analyze(p: Program, k: int = 1, *, access_restriction: bool = True, naive: bool = False) -> StaticAbstractTrace:
    if k not in (1, 2, 3):
        raise ValueError(f"rank must be 1, 2 or 3, got {k}")
    facts = extract_facts(p)
    given = {**facts, "RfCandidate": rf_candidates(facts)} if k == 3 else facts
    db = evaluate(given, rules_for_rank(k, access_restriction), naive=naive)
    may_rf = frozenset(RfEdge(*e) for e in db["MayRf"])
    sets = {}
    if k >= 2:
        sets[2] = _split_all(db["MayRfs"], 2, may_rf)
    if k >= 3:
        sets[3] = db["MayRfs3"]
    trace = StaticAbstractTrace(k, may_rf, sets, db, facts, p)
    check_trace(trace, access_restriction)
    return trace


def extend_trace(trace: StaticAbstractTrace, k: int) -> StaticAbstractTrace:
    """Raise a trace's rank by one, reusing the lower-rank database as facts."""
    if k != trace.rank + 1 or k > 3:
        raise ValueError(f"cannot extend a rank-{trace.rank} trace to rank {k}")
    if k == 2:
        db = evaluate(trace.db, rank2_rules())
        new = _split_all(db["MayRfs"], 2, trace.may_rf)
    else:
        db = evaluate({**trace.db, "RfCandidate": rf_candidates(trace.facts)}, rank3_rules())
        new = db["MayRfs3"]
    sets = {**trace.sets_by_rank, k: new}
    out = StaticAbstractTrace(k, trace.may_rf, sets, db, trace.facts, trace.program)
    check_trace(out, access_restriction=True)
    return out


def check_trace(trace: StaticAbstractTrace, access_restriction: bool) -> None:
    db = trace.db
    if db["MayRf"] & db["NoRf"]:
        raise InvariantViolation(f"MayRf and NoRf overlap: {sorted(db['MayRf'] & db['NoRf'])[:5]}")
    if trace.rank >= 2:
        if db["MayRfs"] & db.get("NoRfs", frozenset()):
            raise InvariantViolation("MayRfs and NoRfs overlap")
        for x in db["MayRfs"]:
            if not set(split_edges(x, 2)) <= trace.may_rf:
                raise InvariantViolation(f"MayRfs tuple {x} uses an edge outside MayRf")
    if trace.rank >= 3 and db["MayRfs3"] & db.get("NoRfs3", frozenset()):
        raise InvariantViolation("MayRfs3 and NoRfs3 overlap")
    universe = {s for _, s in db["Access"]} if access_restriction else {s for s, _ in db["St"]}
    for a, b in db["MustHb"]:
        if a in universe and b in universe and (a, b) not in db["MayHb"]:
            raise InvariantViolation(f"MustHb({a},{b}) missing from MayHb")
    graph = nx.DiGraph(list(db["MustHb"]))
    for comp in nx.strongly_connected_components(graph):
        if len(comp) > 1 or any(graph.has_edge(n, n) for n in comp):
            msg = f"MustHb cycle among {', '.join(sorted(comp))}"
            trace.warnings.append(msg)
            log.warning(msg)
