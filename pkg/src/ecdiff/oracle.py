"""Bounded enumeration of sequentially consistent interleavings.

Gives the exact read-from behaviour of small programs at a loop bound, used
as ground truth for the static over-approximation.
"""

from __future__ import annotations

import bisect
import sys
from dataclasses import dataclass, field
from itertools import permutations
from typing import Iterable, Iterator

from .errors import OracleError
from .frontend import Program, Stmt, eval_expr, walk
from .rules import RfEdge, StaticAbstractTrace

COMPLETE, DEADLOCK, PRUNED = "complete", "deadlock", "pruned"
_BUDGET = object()


class SoEdge(tuple):
    """(first store, second store, var); a distinct type so it never equals an RfEdge."""

    __slots__ = ()

    def __new__(cls, first: str, second: str, var: str):
        return super().__new__(cls, (first, second, var))

    def __eq__(self, other):
        return type(other) is SoEdge and tuple.__eq__(self, other)

    def __ne__(self, other):
        return not self == other

    def __hash__(self):
        return hash(("so",) + tuple(self))

    def __repr__(self):
        return f"SoEdge{tuple(self)!r}"


@dataclass(frozen=True)
class GroundTrace:
    events: tuple[str, ...]
    status: str
    rf: tuple[tuple[RfEdge, int], ...]  # (edge, position of the load event)
    so: tuple[tuple[SoEdge, int], ...]  # (edge, position of the second store)
    failed_asserts: tuple[str, ...] = ()

    @property
    def rf_edges(self) -> frozenset[RfEdge]:
        return frozenset(e for e, _ in self.rf)

    @property
    def so_edges(self) -> frozenset[SoEdge]:
        return frozenset(e for e, _ in self.so)


@dataclass(frozen=True)
class Enumeration:
    traces: tuple[GroundTrace, ...]
    loop_bound: int
    states: int

    @property
    def pruned(self) -> bool:
        return any(t.status == PRUNED for t in self.traces)

    @property
    def deadlocks(self) -> tuple[GroundTrace, ...]:
        return tuple(t for t in self.traces if t.status == DEADLOCK)

    def __iter__(self) -> Iterator[GroundTrace]:
        return iter(self.traces)

    def __len__(self) -> int:
        return len(self.traces)


class _Machine:
    def __init__(self, p: Program, loop_bound: int):
        self.p = p
        self.bound = loop_bound
        self.gidx = {g: i for i, g in enumerate(p.global_names)}
        self.lidx = {lk: i for i, lk in enumerate(p.locks)}
        self.tidx = {t.name: i for i, t in enumerate(p.threads)}
        self.stmts: dict[str, Stmt] = {s.id: s for s in p.stmts()}
        self.next: dict[str, tuple[str | None, str | None]] = {}
        self.first: list[str | None] = []
        self.loops: list[dict[str, int]] = []  # per thread: while id -> counter slot
        for t in p.threads:
            self.first.append(self._link(t.body, None))
            self.loops.append({s.id: k for k, s in enumerate(x for x in walk(t.body) if x.kind == "while")})

    def _link(self, block: list[Stmt], follow: str | None) -> str | None:
        for s in reversed(block):
            if s.kind == "if":
                self.next[s.id] = (self._link(s.then, follow), self._link(s.orelse, follow))
            elif s.kind == "while":
                self.next[s.id] = (self._link(s.then, s.id), follow)
            else:
                self.next[s.id] = (follow, None)
            follow = s.id
        return follow

    def initial(self):
        threads = []
        for i, t in enumerate(self.p.threads):
            status = "run" if t.name == self.p.entry else "new"
            pc = self.first[i]
            if status == "run" and pc is None:
                status = "done"
            threads.append((pc, status, (0,) * len(self.loops[i])))
        values = tuple(v for _, v in self.p.globals)
        return (values, (-1,) * len(self.p.locks), tuple(threads))

    def env(self, values) -> dict[str, int]:
        return dict(zip(self.p.global_names, values))

    def step(self, state, i):
        """Run thread i one step: None if it cannot move, _BUDGET if the loop budget stops it,
        else (event or None, failed assert flag, next state)."""
        values, owners, threads = state
        pc, status, counters = threads[i]
        if status in ("new", "done") or type(status) is tuple:  # tuple: sleeping on a cond
            return None
        s = self.stmts[pc]
        kind = s.kind
        nxt, alt = self.next[pc]
        event, failed = pc, False
        if status == "woken":
            li = self.lidx[s.lock]
            if owners[li] != -1:
                return None
            owners = _set(owners, li, i)
            return pc, False, (values, owners, _set(threads, i, self._advance(nxt, counters)))
        if kind == "assign":
            val = eval_expr(s.expr, self.env(values))
            values = _set(values, self.gidx[s.target], val)
        elif kind in ("if", "while"):
            taken = eval_expr(s.expr, self.env(values)) != 0
            if kind == "while":
                slot = self.loops[i][pc]
                if taken:
                    if counters[slot] >= self.bound:
                        return _BUDGET
                    counters = _set(counters, slot, counters[slot] + 1)
                else:
                    counters = _set(counters, slot, 0)
            if not taken:
                nxt = alt
        elif kind == "assert":
            failed = eval_expr(s.expr, self.env(values)) == 0
        elif kind == "lock":
            li = self.lidx[s.target]
            if owners[li] != -1:
                return None
            owners = _set(owners, li, i)
        elif kind == "unlock":
            owners = _set(owners, self.lidx[s.target], -1)
        elif kind == "wait":
            # release and sleep; the event is recorded when the wait completes
            owners = _set(owners, self.lidx[s.lock], -1)
            return None, False, (values, owners, _set(threads, i, (pc, ("wait", s.target), counters)))
        elif kind == "signal":
            threads = tuple(
                (tpc, "woken", tc) if tst == ("wait", s.target) else (tpc, tst, tc) for tpc, tst, tc in threads
            )
        elif kind == "create":
            ci = self.tidx[s.target]
            cpc, _, cc = threads[ci]
            threads = _set(threads, ci, (cpc, "run" if cpc is not None else "done", cc))
        elif kind == "join":
            if threads[self.tidx[s.target]][1] != "done":
                return None
        return event, failed, (values, owners, _set(threads, i, self._advance(nxt, counters)))

    @staticmethod
    def _advance(nxt, counters):
        return (nxt, "run", counters) if nxt is not None else (None, "done", counters)

    def successors(self, state):
        out, budget = [], False
        for i in range(len(state[2])):
            r = self.step(state, i)
            if r is _BUDGET:
                budget = True
            elif r is not None:
                out.append(r)
        return out, budget

    def terminal_status(self, state, budget: bool) -> str:
        if budget:
            return PRUNED
        if all(st in ("new", "done") for _, st, _ in state[2]):
            return COMPLETE
        return DEADLOCK


def _set(t: tuple, i: int, v) -> tuple:
    return t[:i] + (v,) + t[i + 1:]


def _suffixes_memo(m: _Machine, state, memo: dict) -> frozenset:
    hit = memo.get(state)
    if hit is not None:
        return hit
    succ, budget = m.successors(state)
    if not succ:
        result = frozenset([((), m.terminal_status(state, budget))])
    else:
        acc = set()
        for event, failed, nxt in succ:
            head = () if event is None else ((event, failed),)
            for tail, status in _suffixes_memo(m, nxt, memo):
                acc.add((head + tail, status))
        result = frozenset(acc)
    memo[state] = result
    return result


def _runs_plain(m: _Machine, state, prefix: tuple) -> Iterator[tuple]:
    succ, budget = m.successors(state)
    if not succ:
        yield prefix, m.terminal_status(state, budget)
        return
    for event, failed, nxt in succ:
        yield from _runs_plain(m, nxt, prefix if event is None else prefix + ((event, failed),))


def build_trace(p: Program, events: Iterable[tuple[str, bool]], status: str) -> GroundTrace:
    ids, rf, so, failed = [], [], [], []
    last: dict[str, str] = {}
    stores_seen: dict[str, list[str]] = {}
    for pos, (sid, bad) in enumerate(events):
        ids.append(sid)
        s = p.stmt(sid)
        if bad:
            failed.append(sid)
        if s.kind != "wait":
            for v in sorted(s.reads):
                if v in last:
                    rf.append((RfEdge(last[v], sid, v), pos))
        if s.writes is not None:
            v = s.writes
            for prev in dict.fromkeys(stores_seen.get(v, ())):
                so.append((SoEdge(prev, sid, v), pos))
            stores_seen.setdefault(v, []).append(sid)
            last[v] = sid
    return GroundTrace(tuple(ids), status, tuple(rf), tuple(so), tuple(failed))


def enumerate_traces(p: Program, loop_bound: int = 3, *, memoize: bool = True) -> Enumeration:
    """All schedules of `p` up to `loop_bound` iterations per loop activation."""
    if loop_bound < 1:
        raise OracleError("loop bound must be at least 1")
    m = _Machine(p, loop_bound)
    limit = sys.getrecursionlimit()
    sys.setrecursionlimit(max(limit, 20000))
    try:
        if memoize:
            memo: dict = {}
            runs = _suffixes_memo(m, m.initial(), memo)
            states = len(memo)
        else:
            runs = set(_runs_plain(m, m.initial(), ()))
            states = 0
    finally:
        sys.setrecursionlimit(limit)
    traces = tuple(build_trace(p, ev, st) for ev, st in sorted(runs))
    return Enumeration(traces, loop_bound, states)


@dataclass(frozen=True)
class GroundAbstractTrace:
    rank: int
    rf: frozenset[RfEdge]
    so: frozenset[SoEdge]
    rf_sets: frozenset[tuple[RfEdge, ...]]  # witnessed ordered rf tuples, lengths 1..rank
    sets: frozenset[tuple] | None  # same over rf and so edges, when requested
    trace_count: int
    pruned: bool
    deadlocks: int = 0

    def tuples(self, k: int) -> frozenset[tuple[RfEdge, ...]]:
        return frozenset(t for t in self.rf_sets if len(t) == k)


def _profile(realizations: dict) -> tuple:
    # relative order of realization positions is all that matters for ordering
    positions = sorted({p for ps in realizations.values() for p in ps})
    rank = {p: r for r, p in enumerate(positions)}
    return tuple(sorted((e, tuple(rank[p] for p in ps)) for e, ps in realizations.items()))


def witnessed_tuples(profile: tuple, k: int) -> set[tuple]:
    """Ordered tuples of distinct edges with non-decreasing realization positions."""
    pos = {e: ps for e, ps in profile}
    edges = list(pos)
    out: set[tuple] = {(e,) for e in edges}
    if k >= 2:
        for a in edges:
            fa = pos[a][0]
            for b in edges:
                if a != b and pos[b][-1] >= fa:
                    out.add((a, b))
    if k >= 3:
        pairs = [x for x in out if len(x) == 2]
        for a, b in pairs:
            pb = pos[b]
            mid = pb[bisect.bisect_left(pb, pos[a][0])]
            for c in edges:
                if c != a and c != b and pos[c][-1] >= mid:
                    out.add((a, b, c))
    return out


def ground_abstract_trace(
    traces: Enumeration | Iterable[GroundTrace], k: int, *, include_so: bool = False
) -> GroundAbstractTrace:
    if k < 1:
        raise OracleError("rank must be at least 1")
    traces = tuple(traces)
    rf, so = set(), set()
    rf_profiles, mixed_profiles = set(), set()
    for t in traces:
        real: dict = {}
        for e, pos in t.rf:
            real.setdefault(e, []).append(pos)
            rf.add(e)
        rf_profiles.add(_profile(real))
        for e, _ in t.so:
            so.add(e)
        if include_so:
            for e, pos in t.so:
                real.setdefault(e, []).append(pos)
            mixed_profiles.add(_profile(real))
    rf_sets: set = set()
    for prof in rf_profiles:
        rf_sets |= witnessed_tuples(prof, k)
    sets = None
    if include_so:
        sets = set()
        for prof in mixed_profiles:
            sets |= witnessed_tuples(prof, k)
        sets = frozenset(sets)
    pruned = any(t.status == PRUNED for t in traces)
    dead = sum(t.status == DEADLOCK for t in traces)
    return GroundAbstractTrace(k, frozenset(rf), frozenset(so), frozenset(rf_sets), sets, len(traces), pruned, dead)


def explore_ground(p: Program, loop_bound: int = 3, k: int = 2) -> GroundAbstractTrace:
    """Ground abstract trace computed without materializing traces.

    Search runs over (machine state, last writers, stores seen, edges seen,
    pairs seen); since the ground sets are unions over traces, reaching every
    such configuration once is enough. Agrees with
    ``ground_abstract_trace(enumerate_traces(p, b), k)`` on rf, so and rf tuples.
    """
    if loop_bound < 1 or k < 1:
        raise OracleError("loop bound and rank must be at least 1")
    m = _Machine(p, loop_bound)
    gidx = m.gidx
    names = p.global_names
    reads = {sid: [(v, gidx[v]) for v in sorted(s.reads)] for sid, s in m.stmts.items() if s.kind != "wait"}
    writes = {sid: gidx[s.writes] for sid, s in m.stmts.items() if s.writes is not None}

    rf: set = set()
    so: set = set()
    sets: set = set()
    pruned = False
    dead = 0
    terminals = 0
    start = (m.initial(), (None,) * len(names), frozenset(), frozenset(), frozenset())
    seen = {start}
    stack = [start]
    while stack:
        state, lw, stores, edges, pairs = stack.pop()
        succ, budget = m.successors(state)
        if not succ:
            terminals += 1
            status = m.terminal_status(state, budget)
            pruned |= status == PRUNED
            dead += status == DEADLOCK
            continue
        for event, _failed, nxt in succ:
            nlw, nstores, nedges, npairs = lw, stores, edges, pairs
            if event is not None:
                new = []
                for v, gi in reads.get(event, ()):
                    if lw[gi] is not None:
                        new.append(RfEdge(lw[gi], event, v))
                gi = writes.get(event)
                if gi is not None:
                    v = names[gi]
                    so.update(SoEdge(w, event, v) for w, wv in stores if wv == v)
                    nstores = stores | {(event, v)}
                    nlw = _set(lw, gi, event)
                if new:
                    rf.update(new)
                    sets.update((e,) for e in new)
                    pool = edges | set(new)
                    if k >= 2:
                        formed = {(x, n) for x in pool for n in new if x != n}
                        sets.update(formed)
                        allp = pairs | formed
                        if k >= 3:
                            sets.update((a, b, n) for a, b in allp for n in new if n != a and n != b)
                            npairs = frozenset(allp)
                    nedges = frozenset(pool)
            key = (nxt, nlw, nstores, nedges, npairs)
            if key not in seen:
                seen.add(key)
                stack.append(key)
    return GroundAbstractTrace(k, frozenset(rf), frozenset(so), frozenset(sets), None, terminals, pruned, dead)


@dataclass
class SoundnessReport:
    rf_violations: list[RfEdge] = field(default_factory=list)
    set_violations: list[tuple[RfEdge, ...]] = field(default_factory=list)
    imprecision: int = 0  # |static mayRf \ ground rf|, informational
    pruned: bool = False

    @property
    def ok(self) -> bool:
        return not self.rf_violations and not self.set_violations


def check_soundness(static: StaticAbstractTrace, ground: GroundAbstractTrace) -> SoundnessReport:
    if ground.trace_count == 0:
        raise OracleError("incomplete ground truth: no trace was explored")
    if static.program is not None:
        known = {s.id for s in static.program.stmts()}
        stray = {x for e in ground.rf for x in (e.store, e.load)} - known
        if stray:
            raise OracleError(f"ground truth mentions statements unknown to the analysis: {sorted(stray)[:5]}")
    rep = SoundnessReport(pruned=ground.pruned)
    rep.rf_violations = sorted(ground.rf - static.may_rf)
    for n in range(2, min(static.rank, ground.rank) + 1):
        allowed = static.tuples(n)
        rep.set_violations += sorted(t for t in ground.tuples(n) if t not in allowed)
    rep.imprecision = len(static.may_rf - ground.rf)
    return rep


def check_diff_consistency(report, g1: GroundAbstractTrace, g2: GroundAbstractTrace) -> list[str]:
    """Each delta tuple must be witnessed in its own version and never in the other."""
    c = report.correspondence
    problems = []
    fwd = c.forward

    def moved(tup, m):
        return tuple(RfEdge(m[e.store], m[e.load], e.var) for e in tup)

    for tup in sorted(report.delta12):
        if tup not in g1.rf_sets:
            problems.append(f"delta12 {tup} never observed in the first version")
        if moved(tup, fwd) in g2.rf_sets:
            problems.append(f"delta12 {tup} observed in the second version")
    for tup in sorted(report.delta21):
        if moved(tup, fwd) not in g2.rf_sets:
            problems.append(f"delta21 {tup} never observed in the second version")
        if tup in g1.rf_sets:
            problems.append(f"delta21 {tup} observed in the first version")
    return problems


def brute_force_witnessed(trace: GroundTrace, k: int) -> set[tuple]:
    """Reference for `witnessed_tuples`: try every choice of realizations."""
    real: dict = {}
    for e, pos in trace.rf:
        real.setdefault(e, []).append(pos)
    out = set()
    for n in range(1, k + 1):
        for combo in permutations(real, n):
            if _choosable(combo, real, -1):
                out.add(combo)
    return out


def _choosable(combo, real, after) -> bool:
    if not combo:
        return True
    return any(_choosable(combo[1:], real, p) for p in real[combo[0]] if p >= after)
