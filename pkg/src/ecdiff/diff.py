from __future__ import annotations

import difflib
import json
import time
from dataclasses import dataclass, field
from typing import Iterable

from .errors import EcdiffError, MatchError
from .frontend import Program, Stmt
from .datalog import paused_gc
from .rules import RfEdge, StaticAbstractTrace, analyze, extend_trace

EdgeTuple = tuple[RfEdge, ...]


@dataclass(eq=False)
class Correspondence:
    forward: dict[str, str]
    unmatched1: frozenset[str]
    unmatched2: frozenset[str]

    @property
    def backward(self) -> dict[str, str]:
        return {b: a for a, b in self.forward.items()}


def parse_map(text: str) -> dict[str, str]:
    """Read ``L1 -> L2`` lines; ``#`` starts a comment."""
    mapping: dict[str, str] = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        left, sep, right = line.partition("->")
        left, right = left.strip(), right.strip()
        if not sep or not left or not right or " " in left or " " in right:
            raise MatchError(f"map line {n}: expected '<label> -> <label>', got {raw.strip()!r}")
        if left in mapping:
            raise MatchError(f"map line {n}: {left} mapped twice")
        mapping[left] = right
    return mapping


def _find(p: Program, name: str, side: str) -> Stmt:
    try:
        return p.stmt(name)
    except KeyError:
        raise MatchError(f"map refers to unknown statement {name} in the {side} program") from None


def match_statements(p1: Program, p2: Program, explicit_map: dict[str, str] | None = None) -> Correspondence:
    forward: dict[str, str] = {}
    explicit = dict(explicit_map or {})
    seen_targets: dict[str, str] = {}
    for a, b in explicit.items():
        _find(p1, a, "first")
        _find(p2, b, "second")
        if b in seen_targets:
            raise MatchError(f"map sends both {seen_targets[b]} and {a} to {b}")
        seen_targets[b] = a
        forward[a] = b
    taken2 = set(forward.values())

    labels2 = {s.label: s.id for s in p2.stmts() if s.label is not None}
    for s in p1.stmts():
        if s.id in forward or s.label is None:
            continue
        other = labels2.get(s.label)
        if other is not None and other not in taken2:
            forward[s.id] = other
            taken2.add(other)

    # unlabeled statements: align equal signatures thread by thread, in textual order
    names2 = {t.name for t in p2.threads}
    for t1 in p1.threads:
        if t1.name not in names2:
            continue
        a = [s for s in p1.stmts() if s.thread == t1.name and s.label is None and s.id not in forward]
        b = [s for s in p2.stmts() if s.thread == t1.name and s.label is None and s.id not in taken2]
        sm = difflib.SequenceMatcher(None, [s.signature() for s in a], [s.signature() for s in b], autojunk=False)
        for block in sm.get_matching_blocks():
            for i in range(block.size):
                forward[a[block.a + i].id] = b[block.b + i].id
                taken2.add(b[block.b + i].id)

    ids1 = {s.id for s in p1.stmts()}
    ids2 = {s.id for s in p2.stmts()}
    return Correspondence(forward, frozenset(ids1 - forward.keys()), frozenset(ids2 - taken2))


def _translate(tup: EdgeTuple, m: dict[str, str]) -> EdgeTuple | None:
    out = []
    for e in tup:
        if e.store not in m or e.load not in m:
            return None
        out.append(RfEdge(m[e.store], m[e.load], e.var))
    return tuple(out)


def _edge_map(edges: Iterable[RfEdge], m: dict[str, str]) -> dict[RfEdge, RfEdge | None]:
    return {e: (_translate((e,), m) or (None,))[0] for e in edges}


def _split(tuples: frozenset[EdgeTuple], emap: dict, other: frozenset[EdgeTuple]):
    """Partition into (translated tuples missing from ``other``, originals, untranslatable)."""
    if all(k == m for k, m in emap.items()):
        # names line up edge for edge: plain set difference
        return [(t, t) for t in tuples - other], []
    missing, local = [], []
    get = emap.__getitem__
    for tup in tuples:
        moved = tuple(map(get, tup))
        if None in moved:
            local.append(tup)
        elif moved not in other:
            missing.append((moved, tup))
    return missing, local


def diff_traces(t1: StaticAbstractTrace, t2: StaticAbstractTrace, c: Correspondence, rank: int | None = None):
    """Return ``(delta12, delta21, patch_local_12, patch_local_21)``; deltas use P1 names."""
    k = rank if rank is not None else t1.rank
    if rank is None and t1.rank != t2.rank:
        raise EcdiffError(f"cannot diff traces of rank {t1.rank} and {t2.rank}")
    a, b = t1.tuples(k), t2.tuples(k)
    with paused_gc():
        miss12, local12 = _split(a, _edge_map(t1.may_rf, c.forward), b)
        miss21, local21 = _split(b, _edge_map(t2.may_rf, c.backward), a)
        delta12 = frozenset(orig for _, orig in miss12)
        delta21 = frozenset(moved for moved, _ in miss21)
        return delta12, delta21, frozenset(local12), frozenset(local21)


def _render_tuple(tup: EdgeTuple) -> list[list[str]]:
    return [[e.store, e.load] for e in tup]


def _render_all(tuples: Iterable[EdgeTuple]) -> list:
    rendered = {json.dumps(_render_tuple(t)) for t in tuples}
    return [json.loads(r) for r in sorted(rendered)]


@dataclass(eq=False)
class DiffReport:
    rank_found: int
    delta12: frozenset[EdgeTuple]
    delta21: frozenset[EdgeTuple]
    patch_local_12: frozenset[EdgeTuple]
    patch_local_21: frozenset[EdgeTuple]
    stats: dict[str, int]
    correspondence: Correspondence | None = field(default=None, repr=False)
    max_rank: int = 3

    @property
    def found(self) -> bool:
        return self.rank_found > 0

    def to_dict(self) -> dict:
        return {
            "rank_found": self.rank_found,
            "delta12": _render_all(self.delta12),
            "delta21": _render_all(self.delta21),
            "patch_local_12": _render_all(self.patch_local_12),
            "patch_local_21": _render_all(self.patch_local_21),
            "stats": dict(self.stats),
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    def to_text(self) -> str:
        lines = []
        if self.rank_found == 0:
            lines.append(f"no synchronization difference up to rank {self.max_rank}")
        else:
            lines.append(f"difference found at rank {self.rank_found}")

        def section(title: str, tuples: frozenset[EdgeTuple]) -> None:
            lines.append(f"{title} ({len(tuples)}):")
            for tup in sorted(tuples):
                lines.append("  " + " -> ".join(f"RF({e.store},{e.load}) on {e.var}" for e in tup))

        section("only in first version (delta12)", self.delta12)
        section("only in second version (delta21)", self.delta21)
        if self.patch_local_12 or self.patch_local_21:
            section("patch-local, first version", self.patch_local_12)
            section("patch-local, second version", self.patch_local_21)
        st = self.stats
        lines.append(
            f"mayHb {st['mayHb_p1']}/{st['mayHb_p2']}  mayRf {st['mayRf_p1']}/{st['mayRf_p2']}  {st['millis']} ms"
        )
        return "\n".join(lines)


def iterative_diff(
    p1: Program, p2: Program, max_rank: int = 3, explicit_map: dict[str, str] | None = None
) -> DiffReport:
    if max_rank not in (1, 2, 3):
        raise EcdiffError(f"max rank must be 1, 2 or 3, got {max_rank}")
    start = time.perf_counter()
    c = match_statements(p1, p2, explicit_map)
    rank_found = 0
    # patch-local tuples are collected over every rank examined
    local12: frozenset = frozenset()
    local21: frozenset = frozenset()
    with paused_gc():
        t1, t2 = analyze(p1), analyze(p2)
        for k in range(1, max_rank + 1):
            if k > 1:
                t1, t2 = extend_trace(t1, k), extend_trace(t2, k)
            delta12, delta21, l12, l21 = diff_traces(t1, t2, c)
            local12, local21 = local12 | l12, local21 | l21
            if delta12 or delta21:
                rank_found = k
                break
        stats = {
            "mayHb_p1": len(t1.may_hb),
            "mayHb_p2": len(t2.may_hb),
            "mayRf_p1": len(t1.may_rf),
            "mayRf_p2": len(t2.may_rf),
        }
        # free the traces while the collector is off; otherwise re-enabling it
        # triggers a full pass over millions of live tuples
        del t1, t2
    stats["millis"] = int((time.perf_counter() - start) * 1000)
    return DiffReport(rank_found, delta12, delta21, local12, local21, stats, c, max_rank)
