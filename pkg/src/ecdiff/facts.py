"""Base relations extracted from a parsed program and its structure."""

from __future__ import annotations

import json
from collections.abc import Mapping
from typing import Iterator

from .frontend import Program, Structure, build_structure, detect_sync_patterns
from .frontend.patterns import parents

# name -> arity; order is the dump order
BASE_RELATIONS: dict[str, int] = {
    "St": 2,
    "Po": 2,
    "Dom": 2,
    "PostDom": 2,
    "LoopReach": 2,
    "ThrdCreate": 3,
    "ThrdJoin": 3,
    "CondWait": 2,
    "CondSignal": 2,
    "Load": 2,
    "Store": 2,
    "InCS": 2,
    "SameCS": 3,
    "DiffCS": 3,
    "Access": 2,
    "GuardedSignalWait": 2,
    "WaitGuard": 2,
    "AdhocOrder": 2,
}


class FactBase(Mapping[str, frozenset]):
    """Immutable map from base relation name to its tuple set."""

    def __init__(self, relations: Mapping[str, set]):
        self._rel = {name: frozenset(relations.get(name, ())) for name in BASE_RELATIONS}

    def __getitem__(self, name: str) -> frozenset:
        return self._rel[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._rel)

    def __len__(self) -> int:
        return len(self._rel)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, FactBase) and self._rel == other._rel

    __hash__ = None  # type: ignore[assignment]

    def to_dict(self) -> dict[str, list[list[str]]]:
        return {name: [list(t) for t in sorted(tuples)] for name, tuples in self._rel.items()}

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def extract_facts(p: Program, structure: Structure | None = None) -> FactBase:
    s = structure if structure is not None else build_structure(p)
    rel: dict[str, set] = {name: set() for name in BASE_RELATIONS}
    for st in p.stmts():
        rel["St"].add((st.id, st.thread))
        for v in st.reads:
            rel["Load"].add((st.id, v))
            rel["Access"].add((v, st.id))
        if st.writes is not None:
            rel["Store"].add((st.id, st.writes))
            rel["Access"].add((st.writes, st.id))
        if st.kind == "create":
            rel["ThrdCreate"].add((st.thread, st.id, st.target))
        elif st.kind == "join":
            rel["ThrdJoin"].add((st.thread, st.id, st.target))
        elif st.kind == "wait":
            rel["CondWait"].add((st.id, st.target))
        elif st.kind == "signal":
            rel["CondSignal"].add((st.id, st.target))
    rel["Po"] = set(s.po)
    rel["Dom"] = set(s.dom)
    rel["PostDom"] = set(s.postdom)
    rel["LoopReach"] = set(s.loop_reach)
    rel["InCS"] = set(s.cs.in_cs())
    rel["SameCS"] = set(s.cs.same_cs())
    rel["DiffCS"] = set(s.cs.diff_cs())
    guarded, adhoc = detect_sync_patterns(p, s)
    rel["GuardedSignalWait"] = set(guarded)
    up = parents(p)
    rel["WaitGuard"] = {(up[w].id, w) for _, w in guarded}
    rel["AdhocOrder"] = set(adhoc)
    return FactBase(rel)
