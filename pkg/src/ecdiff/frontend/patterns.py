from __future__ import annotations

from .program import INIT_PREFIX, Const, Program, Stmt, eval_expr
from .structure import Structure


def parents(p: Program) -> dict[str, Stmt | None]:
    parent: dict[str, Stmt | None] = {}

    def visit(block: list[Stmt], up: Stmt | None) -> None:
        for s in block:
            parent[s.id] = up
            visit(s.then, s)
            visit(s.orelse, s)

    for t in p.threads:
        visit(t.body, None)
    return parent


def _in_loop(sid: str, parent: dict[str, Stmt | None]) -> bool:
    up = parent[sid]
    while up is not None:
        if up.kind == "while":
            return True
        up = parent[up.id]
    return False


def detect_sync_patterns(p: Program, structure: Structure):
    """Return ``(guarded_wait_pairs, adhoc_pairs)`` as sorted lists of id pairs.

    guarded: (signal, wait) when every wait on the condition variable is the
    only statement of an else-less ``if`` over one flag, and the single
    signal's thread sets that flag to a nonzero constant before signalling.
    Each guard must hold on the flag's initial value.
    The flag store and the signal must share one critical section of the
    lock the waits use, and no other thread may write the flag; otherwise a
    waiter could see the flag, skip the wait and overtake the signal.

    adhoc: (store, while) for an empty spin loop on one flag whose initial
    value keeps it spinning, released by the only store to that flag (in a
    different thread, outside any loop).
    """
    parent = parents(p)
    stmts = list(p.stmts())
    guarded: set[tuple[str, str]] = set()
    adhoc: set[tuple[str, str]] = set()

    init = dict(p.globals)
    for c in p.conds:
        waits = [s for s in stmts if s.kind == "wait" and s.target == c]
        signals = [s for s in stmts if s.kind == "signal" and s.target == c]
        if not waits or len(signals) != 1:
            continue
        sig = signals[0]
        if _in_loop(sig.id, parent):
            continue
        flags, wait_locks = set(), {w.lock for w in waits}
        for w in waits:
            up = parent[w.id]
            if up is None or up.kind != "if" or up.then != [w] or up.orelse or len(up.reads) != 1:
                break
            flags |= up.reads
        else:
            if len(flags) != 1 or len(wait_locks) != 1:
                continue
            (g,) = flags
            (lk,) = wait_locks
            stores = [s for s in stmts if s.writes == g and not (s.label or "").startswith(INIT_PREFIX)]
            if len(stores) != 1:
                continue
            (st,) = stores
            guards = [parent[w.id] for w in waits]
            if not all(eval_expr(gd.expr, {g: init[g]}) for gd in guards):
                continue
            region = structure.cs.region(st.id, lk)
            ok = (
                st.thread == sig.thread and isinstance(st.expr, Const) and st.expr.value != 0
                and (st.id, sig.id) in structure.po
                and region is not None and region == structure.cs.region(sig.id, lk)
            )
            if ok:
                guarded.update((sig.id, w.id) for w in waits)

    for w in stmts:
        if w.kind != "while" or w.then or len(w.reads) != 1:
            continue
        (g,) = w.reads
        if not eval_expr(w.expr, {g: init[g]}):
            continue
        stores = [s for s in stmts if s.writes == g and not (s.label or "").startswith(INIT_PREFIX)]
        if len(stores) != 1:
            continue
        (st,) = stores
        if st.thread != w.thread and not _in_loop(st.id, parent):
            adhoc.add((st.id, w.id))
    return sorted(guarded), sorted(adhoc)

