"""Per-thread control-flow graphs, ordering relations and critical sections."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import networkx as nx

from ..errors import StructureError
from .program import Program, Stmt, ThreadDef, walk

ENTRY = "<entry>"
EXIT = "<exit>"


@dataclass(eq=False)
class Cfg:
    thread: str
    graph: nx.DiGraph
    back_edges: frozenset[tuple[str, str]]
    stmts: dict[str, Stmt]
    entry: str = ENTRY
    exit: str = EXIT

    @property
    def nodes(self) -> list[str]:
        return [n for n in self.graph if n not in (ENTRY, EXIT)]


def build_cfg(thread: ThreadDef) -> Cfg:
    g = nx.DiGraph()
    g.add_node(ENTRY)
    g.add_node(EXIT)
    back: set[tuple[str, str]] = set()
    stmts = {s.id: s for s in walk(thread.body)}
    g.add_nodes_from(stmts)

    def link(block: list[Stmt], follow: str) -> str:
        # wires `block` so that control continues at `follow`; returns its first node
        for s in reversed(block):
            if s.kind == "if":
                g.add_edge(s.id, link(s.then, follow))
                g.add_edge(s.id, link(s.orelse, follow))
            elif s.kind == "while":
                g.add_edge(s.id, link(s.then, s.id))
                g.add_edge(s.id, follow)
            else:
                g.add_edge(s.id, follow)
            follow = s.id
        return follow

    g.add_edge(ENTRY, link(thread.body, EXIT))
    # back edges: edges into a while header from inside its body
    for s in stmts.values():
        if s.kind == "while":
            inside = {b.id for b in walk(s.then)}
            back.update((p, s.id) for p in g.predecessors(s.id) if p in inside or p == s.id)
    return Cfg(thread.name, g, frozenset(back), stmts)


# -- lockset analysis


@dataclass(frozen=True)
class Region:
    """A critical-section instance: acquired at `site`, or merged at `site`."""

    thread: str
    lock: str
    site: str

    def __str__(self) -> str:
        return f"{self.thread}:{self.lock}@{self.site}"


class LockError(StructureError):
    def __init__(self, message: str, stmt: Stmt | None = None, kind: str = "lock"):
        super().__init__(message)
        self.stmt = stmt
        self.kind = kind


def _lockset(cfg: Cfg) -> tuple[dict[str, dict[str, Region]], dict[Region, frozenset[str]]]:
    """Forward all-paths lockset; returns IN states per node and region origins."""
    g = cfg.graph
    order = [n for n in nx.dfs_preorder_nodes(g, ENTRY)]
    IN: dict[str, dict[str, Region]] = {}
    OUT: dict[str, dict[str, Region]] = {ENTRY: {}}
    origins: dict[Region, frozenset[str]] = {}
    changed = True
    while changed:
        changed = False
        for n in order:
            if n == ENTRY:
                continue
            preds = [OUT[p] for p in g.predecessors(n) if p in OUT]
            if not preds:
                continue
            held = set(preds[0])
            for st in preds[1:]:
                if set(st) != held:
                    lk = sorted(held ^ set(st))[0]
                    where = "the end of the thread" if n == EXIT else f"{n} ({cfg.stmts[n].render()})"
                    branches = sorted(p for p in g.predecessors(n) if p in OUT and lk in OUT[p])
                    raise LockError(
                        f"thread {cfg.thread}: lock {lk} is held on some paths reaching {where} but not others"
                        + f" (held after {', '.join(branches)})",
                        cfg.stmts.get(n),
                    )
            state: dict[str, Region] = {}
            for lk in sorted(held):
                regions = {st[lk] for st in preds}
                if len(regions) == 1:
                    state[lk] = regions.pop()
                else:
                    merged = Region(cfg.thread, lk, n)
                    union = frozenset().union(*(origins[r] for r in regions))
                    if origins.get(merged) != union:
                        origins[merged] = union | origins.get(merged, frozenset())
                        changed = True
                    state[lk] = merged
            if IN.get(n) != state:
                IN[n] = state
                changed = True
            if n == EXIT:
                continue
            out = _transfer(cfg, cfg.stmts[n], state, origins)
            if OUT.get(n) != out:
                OUT[n] = out
                changed = True
    if IN.get(EXIT):
        lk = sorted(IN[EXIT])[0]
        raise LockError(f"thread {cfg.thread}: lock {lk} is still held when the thread ends")
    return IN, origins


def _transfer(cfg: Cfg, s: Stmt, state: dict[str, Region], origins: dict) -> dict[str, Region]:
    if s.kind == "lock":
        if s.target in state:
            raise LockError(f"{s.id}: lock({s.target}) while {s.target} is already held (locks are not reentrant)", s)
        r = Region(cfg.thread, s.target, s.id)
        origins.setdefault(r, frozenset([s.id]))
        return {**state, s.target: r}
    if s.kind == "unlock":
        if s.target not in state:
            raise LockError(f"{s.id}: unlock({s.target}) without holding {s.target}", s)
        return {k: v for k, v in state.items() if k != s.target}
    if s.kind == "wait":
        if s.lock not in state:
            raise LockError(f"{s.id}: wait({s.target}, {s.lock}) without holding {s.lock}", s, kind="wait")
        # the lock is released and re-acquired: a fresh region starts here
        r = Region(cfg.thread, s.lock, s.id)
        origins.setdefault(r, frozenset([s.id]))
        return {**state, s.lock: r}
    return state


def check_thread_locks(thread: ThreadDef) -> None:
    _lockset(build_cfg(thread))


@dataclass(eq=False)
class CriticalSectionMap:
    regions: dict[tuple[str, str], Region]  # (stmt, lock) -> region
    origins: dict[Region, frozenset[str]]
    thread_of: dict[str, str]

    def region(self, sid: str, lock: str) -> Region | None:
        return self.regions.get((sid, lock))

    def in_cs(self) -> Iterator[tuple[str, str]]:
        yield from sorted(self.regions)

    def same_cs(self) -> Iterator[tuple[str, str, str]]:
        by_region: dict[Region, list[str]] = {}
        for (sid, _lk), r in self.regions.items():
            by_region.setdefault(r, []).append(sid)
        for r, members in by_region.items():
            for a in members:
                for b in members:
                    yield a, b, r.lock

    def diff_cs(self) -> Iterator[tuple[str, str, str]]:
        by_lock: dict[str, list[tuple[str, Region]]] = {}
        for (sid, lk), r in self.regions.items():
            by_lock.setdefault(lk, []).append((sid, r))
        for lk, members in by_lock.items():
            for a, ra in members:
                for b, rb in members:
                    if ra == rb:
                        continue
                    if ra.thread != rb.thread or not (self.origins[ra] & self.origins[rb]):
                        yield a, b, lk


@dataclass(eq=False)
class Structure:
    program: Program
    cfgs: dict[str, Cfg]
    cs: CriticalSectionMap
    po: frozenset[tuple[str, str]]
    dom: frozenset[tuple[str, str]]
    postdom: frozenset[tuple[str, str]]
    loop_reach: frozenset[tuple[str, str]]
    reach: dict[str, frozenset[str]] = field(repr=False, default_factory=dict)


def _dominators(g: nx.DiGraph, root: str) -> dict[str, set[str]]:
    idom = nx.immediate_dominators(g, root)
    doms: dict[str, set[str]] = {}
    for n in idom:
        chain, m = set(), n
        while True:
            chain.add(m)
            if idom[m] == m:
                break
            m = idom[m]
        doms[n] = chain
    return doms


def build_structure(p: Program) -> Structure:
    cfgs = {t.name: build_cfg(t) for t in p.threads}
    po, dom, postdom, loop = set(), set(), set(), set()
    reach: dict[str, frozenset[str]] = {}
    regions: dict[tuple[str, str], Region] = {}
    origins: dict[Region, frozenset[str]] = {}
    for cfg in cfgs.values():
        g = cfg.graph
        nodes = cfg.nodes
        for n in nodes:
            # nodes reachable by a non-empty path; includes n itself when n is on a cycle
            out: set[str] = set()
            for m in g.successors(n):
                out.add(m)
                out |= nx.descendants(g, m)
            reach[n] = frozenset(out - {EXIT})
        doms = _dominators(g, ENTRY)
        pdoms = _dominators(g.reverse(copy=False), EXIT)
        for a in nodes:
            for b in nodes:
                a_to_b, b_to_a = b in reach[a], a in reach[b]
                if a_to_b and b_to_a:
                    loop.add((a, b))
                if a == b:
                    continue
                if a_to_b and not b_to_a:
                    po.add((a, b))
                if a in doms[b] and not b_to_a:
                    dom.add((a, b))
                if a in pdoms[b] and not a_to_b:
                    postdom.add((a, b))
        IN, orig = _lockset(cfg)
        origins.update(orig)
        for n in nodes:
            s = cfg.stmts[n]
            for lk, r in IN.get(n, {}).items():
                if s.kind == "unlock" and s.target == lk:
                    continue
                regions[(n, lk)] = r
    thread_of = {s.id: s.thread for s in p.stmts()}
    cs = CriticalSectionMap(regions, origins, thread_of)
    return Structure(p, cfgs, cs, frozenset(po), frozenset(dom), frozenset(postdom), frozenset(loop), reach)
