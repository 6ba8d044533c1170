from __future__ import annotations

from collections import deque

import pytest

from ecdiff import fixtures
from ecdiff.errors import ParseError, StructureError
from ecdiff.frontend import INIT_PREFIX, build_structure, detect_sync_patterns, eval_expr, parse
from ecdiff.frontend.program import Binary, Const, Name, Unary
from ecdiff.frontend.structure import ENTRY, EXIT, LockError
from ecdiff.generate import random_program


def _bfs(succ, start, banned=None):
    """Nodes reachable from `start` by a non-empty path, never entering `banned`."""
    seen, todo = set(), deque(succ(start))
    while todo:
        n = todo.popleft()
        if n in seen or n == banned:
            continue
        seen.add(n)
        todo.extend(succ(n))
    return seen


# ---------------------------------------------------------------- parsing


def test_parse_mot1_ids_and_threads():
    p = fixtures.load("mot1_a")
    assert p.entry == "main"
    assert [t.name for t in p.threads] == ["main", "thread1", "thread2"]
    assert [s.id for s in p.stmts() if s.thread == "thread2"] == ["L4", "L5"]
    assert p.stmt("__init_x").thread == "main"
    assert p.user_labels() == {"L1", "L2", "L3", "L4", "L5"}


def test_unlabeled_ids_count_init_stores():
    # ids are t<thread index>#<preorder position>, init stores included
    p = parse("var x = 1; var y; thread main { x = 2; A: y = x; skip; }")
    assert [s.id for s in p.stmts()] == ["__init_x", "__init_y", "t0#2", "A", "t0#4"]


def test_entry_is_first_thread_without_main():
    p = fixtures.load("mot3_a")
    assert p.entry == "thread1"
    assert next(iter(p.stmts())).id == "__init_x"


def test_contextual_keywords_as_variable_names():
    p = parse("var cond = false; var lock; thread main { cond = true; lock = cond; }")
    assert [s.writes for s in p.stmts()] == ["cond", "lock", "cond", "lock"]


def test_reads_and_writes():
    p = fixtures.load("mot2_a")
    assert p.stmt("L3").reads == {"x"} and p.stmt("L3").writes == "y"
    assert p.stmt("L1").reads == {"x"} and p.stmt("L1").writes is None


def test_comments_and_true_false():
    p = parse("// hi\nvar f = true; // trailing\nthread main { f = false; }")
    assert [s.expr for s in p.stmts()] == [Const(1), Const(0)]


@pytest.mark.parametrize(
    "src, fragment",
    [
        ("thread main { x = 1; }", "undeclared name x"),
        ("var x; thread main { A: x = 1; A: x = 2; }", "duplicate label A"),
        ("var x; thread main { __init_q: x = 1; }", "reserved"),
        ("var x; lock a; cond c; thread main { wait(c, a); }", "holding a"),
        ("var x; thread main { while (x < 1) { create(w); } } thread w { x = 1; }", "inside a loop"),
        ("thread main { create(w); create(w); } thread w { skip; }", "more than once"),
        ("thread main { create(main); }", "cannot create itself"),
        ("thread main { join(main); }", "cannot join itself"),
        ("thread main { create(w); } thread w { create(main); }", "cannot be created"),
        ("var x;", "no thread"),
        ("var x; thread main { x = ; }", "expected"),
        ("var if; thread main { skip; }", "expected a name"),
        ("var x; var x; thread main { skip; }", "duplicate declaration"),
        ("var x; thread main { x = 1 $ 2; }", "unexpected character"),
    ],
)
def test_parse_errors(src, fragment):
    with pytest.raises(ParseError) as err:
        parse(src)
    assert fragment in str(err.value)
    assert err.value.line is not None


def test_parse_error_position():
    with pytest.raises(ParseError) as err:
        parse("var x;\nthread main {\n  x = y;\n}")
    assert (err.value.line, err.value.column) == (3, 7)


@pytest.mark.parametrize(
    "src, fragment",
    [
        ("lock a; thread main { unlock(a); }", "without holding"),
        ("lock a; thread main { lock(a); }", "still held"),
        ("lock a; thread main { lock(a); lock(a); unlock(a); }", "reentrant"),
        ("var x; lock a; thread main { if (x) { lock(a); } unlock(a); }", "some paths"),
    ],
)
def test_lock_discipline(src, fragment):
    with pytest.raises(LockError) as err:
        build_structure(parse(src))
    assert isinstance(err.value, StructureError)
    assert fragment in str(err.value)


def test_eval_expr():
    env = {"x": 3, "y": 0}
    e = Binary("+", Name("x"), Binary("*", Const(2), Name("x")))
    assert eval_expr(e, env) == 9
    assert eval_expr(Unary("!", Name("y")), env) == 1
    assert eval_expr(Binary("<", Name("y"), Name("x")), env) == 1
    assert eval_expr(Binary("==", Name("y"), Name("x")), env) == 0


def test_render_round_trips():
    for name in fixtures.NAMES:
        p = fixtures.load(name)
        for s in p.stmts():
            assert s.render()
        assert len({s.signature() for s in p.stmts() if s.label}) >= 1


# ---------------------------------------------------------------- control flow


def test_cfg_shapes():
    p = parse("var x; thread main { A: if (x) { B: x = 1; } else { C: x = 2; } D: while (x < 3) { E: x = x + 1; } F: while (x) {} }")
    g = build_structure(p).cfgs["main"].graph
    assert set(g.successors("A")) == {"B", "C"}
    assert set(g.successors("B")) == {"D"} and set(g.successors("C")) == {"D"}
    assert set(g.successors("D")) == {"E", "F"}
    assert set(g.successors("E")) == {"D"}
    assert set(g.successors("F")) == {"F", EXIT}


def _check_structure(p):
    st = build_structure(p)
    for name, cfg in st.cfgs.items():
        g = cfg.graph
        nodes = cfg.nodes
        reach = {n: _bfs(g.successors, n) - {EXIT} for n in nodes}
        assert reach == {n: set(st.reach[n]) for n in nodes}
        for a in nodes:
            for b in nodes:
                fwd, back = b in reach[a], a in reach[b]
                assert ((a, b) in st.loop_reach) == (fwd and back)
                if a == b:
                    assert (a, a) not in st.po | st.dom | st.postdom
                    continue
                assert ((a, b) in st.po) == (fwd and not back)
                # a dominates b: b is unreachable from the entry once a is removed
                dominates = b not in _bfs(g.successors, ENTRY, banned=a)
                assert ((a, b) in st.dom) == (dominates and not back), (name, a, b)
                post = EXIT not in _bfs(g.successors, b, banned=a)
                assert ((a, b) in st.postdom) == (post and not fwd), (name, a, b)


@pytest.mark.parametrize("name", fixtures.NAMES)
def test_structure_matches_reachability_oracle_fixtures(name):
    _check_structure(fixtures.load(name))


@pytest.mark.parametrize("seed", range(25))
def test_structure_matches_reachability_oracle_random(seed):
    _check_structure(parse(random_program(seed, size=16)))


def test_mot1_relations():
    st = build_structure(fixtures.load("mot1_a"))
    assert {("L1", "L2"), ("L1", "L3"), ("L2", "L3"), ("L4", "L5")} <= st.po
    assert ("L1", "L3") in st.dom and ("L2", "L3") in st.dom
    assert ("L2", "L1") in st.postdom and ("L3", "L2") not in st.postdom


# ---------------------------------------------------------------- critical sections


def test_critical_sections_mot1_b():
    st = build_structure(fixtures.load("mot1_b"))
    cs = st.cs
    in_cs = set(cs.in_cs())
    assert {("L1", "a"), ("L2", "a"), ("L3", "a"), ("L5", "a")} <= in_cs
    assert ("L4", "a") not in in_cs
    same = set(cs.same_cs())
    assert ("L1", "L2", "a") in same and ("L1", "L3", "a") in same
    diff = set(cs.diff_cs())
    assert ("L1", "L5", "a") in diff and ("L5", "L2", "a") in diff
    assert not same & diff


def test_unlock_is_outside_its_section():
    p = parse("var x; lock a; thread main { lock(a); A: x = 1; U: unlock(a); }")
    in_cs = set(build_structure(p).cs.in_cs())
    assert ("A", "a") in in_cs and ("U", "a") not in in_cs


def test_wait_starts_new_section():
    st = build_structure(fixtures.load("mot2_b"))
    wait = next(s.id for s in st.program.stmts() if s.kind == "wait")
    lock_stmt = next(s.id for s in st.program.stmts() if s.kind == "lock" and s.thread == "thread1")
    guard = next(s.id for s in st.program.stmts() if s.kind == "if" and s.thread == "thread1" and not s.label)
    assert st.cs.region(lock_stmt, "a") is None
    # the wait runs inside the first section; L1 is reached with or without waiting
    assert st.cs.region(wait, "a") == st.cs.region(guard, "a")
    merged = st.cs.region("L1", "a")
    assert merged.site == "L1" and merged != st.cs.region(guard, "a")
    assert st.cs.region("L3", "a") == merged
    assert ("L1", guard, "a") not in set(st.cs.same_cs())


@pytest.mark.parametrize("seed", range(20))
def test_same_cs_is_an_equivalence_and_disjoint_from_diff(seed):
    st = build_structure(parse(random_program(seed, size=14)))
    same = set(st.cs.same_cs())
    diff = set(st.cs.diff_cs())
    members = {(a, lk) for a, _, lk in same}
    assert members == set(st.cs.in_cs())
    for a, lk in members:
        assert (a, a, lk) in same
    for a, b, lk in same:
        assert (b, a, lk) in same
    for a, b, lk in diff:
        assert (b, a, lk) in diff
    assert not same & diff


# ---------------------------------------------------------------- patterns


def test_guarded_signal_wait_detected():
    p = fixtures.load("mot2_b")
    guarded, adhoc = detect_sync_patterns(p, build_structure(p))
    sig = next(s.id for s in p.stmts() if s.kind == "signal")
    wait = next(s.id for s in p.stmts() if s.kind == "wait")
    assert guarded == [(sig, wait)]
    assert adhoc == []


def test_guard_must_share_the_section_with_the_store():
    # the flag is set before the critical section, so a waiter can skip the wait early
    src = fixtures.source("mot2_b").replace(
        "thread thread2 {\n  lock(a);", "thread thread2 {\n  cBool = 1;\n  lock(a);"
    ).replace("  x = 4;\n  cBool = 1;\n", "  x = 4;\n")
    src = src.replace("  L5: x = 4;\n  cBool = 1;\n", "  L5: x = 4;\n")
    p = parse(src)
    stores = [s for s in p.stmts() if s.writes == "cBool" and not s.id.startswith("__init_")]
    assert len(stores) == 1 and not any(r for r in build_structure(p).cs.in_cs() if r[0] == stores[0].id)
    guarded, _ = detect_sync_patterns(p, build_structure(p))
    assert guarded == []


def test_two_signals_disable_the_pattern():
    src = fixtures.source("mot2_b").replace("  signal(cv);\n", "  signal(cv);\n  signal(cv);\n")
    p = parse(src)
    assert detect_sync_patterns(p, build_structure(p))[0] == []


def test_adhoc_detected():
    p = fixtures.load("adhoc")
    guarded, adhoc = detect_sync_patterns(p, build_structure(p))
    assert guarded == [] and adhoc == [("A2", "A3")]


@pytest.mark.parametrize(
    "change",
    [
        ("var cond = false;", "var cond = true;"),  # loop never spins
        ("  A2: cond = true;\n", "  A2: cond = true;\n  cond = false;\n"),  # second store
        ("  A4: x = a;\n", "  A4: x = a;\n  cond = true;\n"),  # store in the spinning thread
    ],
)
def test_adhoc_rejected_variants(change):
    p = parse(fixtures.source("adhoc").replace(*change))
    assert detect_sync_patterns(p, build_structure(p))[1] == []


def test_init_prefix_is_exported():
    assert INIT_PREFIX == "__init_"
