from __future__ import annotations

import pytest

from ecdiff import fixtures
from ecdiff.errors import OracleError
from ecdiff.frontend import parse
from ecdiff.generate import random_program
from ecdiff.oracle import (
    COMPLETE,
    DEADLOCK,
    PRUNED,
    SoEdge,
    brute_force_witnessed,
    build_trace,
    check_soundness,
    enumerate_traces,
    explore_ground,
    ground_abstract_trace,
    witnessed_tuples,
    _profile,
)
from ecdiff.rules import RfEdge, analyze

RACE = "var x; var r; thread main { create(w); A: x = 1; } thread w { B: r = x; }"


def test_two_thread_race_schedules():
    en = enumerate_traces(parse(RACE), 2)
    # init, create, then A and B in either order
    assert sorted(t.events for t in en) == [
        ("__init_x", "__init_r", "t0#2", "A", "B"),
        ("__init_x", "__init_r", "t0#2", "B", "A"),
    ]
    assert all(t.status == COMPLETE for t in en)
    g = ground_abstract_trace(en, 2)
    assert g.rf == {RfEdge("A", "B", "x"), RfEdge("__init_x", "B", "x")}
    assert SoEdge("__init_x", "A", "x") in g.so
    assert g.tuples(2) == frozenset()  # B reads once per run


def test_so_edge_never_equals_rf_edge():
    assert SoEdge("a", "b", "x") != RfEdge("a", "b", "x")
    assert len({SoEdge("a", "b", "x"), RfEdge("a", "b", "x")}) == 2


def test_assert_failure_is_recorded():
    p = parse("var x; thread main { create(w); A: assert(x == 0); } thread w { B: x = 1; }")
    en = enumerate_traces(p, 2)
    failing = [t for t in en if t.failed_asserts]
    assert len(failing) == 1 and failing[0].failed_asserts == ("A",)


def test_lock_order_inversion_deadlocks():
    p = parse(
        "lock a; lock b; thread main { create(w); lock(a); lock(b); unlock(b); unlock(a); }"
        " thread w { lock(b); lock(a); unlock(a); unlock(b); }"
    )
    en = enumerate_traces(p, 2)
    assert en.deadlocks and all(t.status in (COMPLETE, DEADLOCK) for t in en)
    assert explore_ground(p, 2, 1).deadlocks > 0


def test_lost_signal_deadlocks():
    p = parse("var f; lock a; cond c; thread main { create(w); lock(a); wait(c, a); unlock(a); } thread w { signal(c); }")
    statuses = {t.status for t in enumerate_traces(p, 2)}
    assert statuses == {COMPLETE, DEADLOCK}


def test_wait_event_recorded_on_wakeup():
    p = fixtures.load("mot2_b")
    wait = next(s.id for s in p.stmts() if s.kind == "wait")
    sig = next(s.id for s in p.stmts() if s.kind == "signal")
    for t in enumerate_traces(p, 2):
        if wait in t.events:
            assert t.events.index(sig) < t.events.index(wait)


def test_loop_bound_prunes():
    p = parse("var x; thread main { L: while (x == 0) {} }")
    en = enumerate_traces(p, 3)
    assert len(en) == 1 and en.pruned and en.traces[0].status == PRUNED
    assert en.traces[0].events.count("L") == 3
    with pytest.raises(OracleError):
        enumerate_traces(p, 0)


def test_bounded_counting_loop_completes():
    p = parse("var x; thread main { L: while (x < 2) { I: x = x + 1; } }")
    en = enumerate_traces(p, 2)
    assert [t.status for t in en] == [COMPLETE]
    assert en.traces[0].events == ("__init_x", "L", "I", "L", "I", "L")


@pytest.mark.parametrize("seed", range(8))
def test_memo_equals_plain(seed):
    p = parse(random_program(seed, size=8))
    a = enumerate_traces(p, 2)
    b = enumerate_traces(p, 2, memoize=False)
    assert a.traces == b.traces


@pytest.mark.parametrize("name", fixtures.NAMES)
def test_explorer_agrees_with_enumeration_fixtures(name):
    p = fixtures.load(name)
    g = ground_abstract_trace(enumerate_traces(p, 2), 3)
    h = explore_ground(p, 2, 3)
    assert (g.rf, g.so, g.rf_sets, g.pruned) == (h.rf, h.so, h.rf_sets, h.pruned)


@pytest.mark.parametrize("seed", range(20))
def test_explorer_agrees_with_enumeration_random(seed):
    p = parse(random_program(seed, size=10))
    g = ground_abstract_trace(enumerate_traces(p, 2), 2)
    h = explore_ground(p, 2, 2)
    assert (g.rf, g.so, g.rf_sets) == (h.rf, h.so, h.rf_sets)
    assert g.pruned == h.pruned
    assert (g.deadlocks > 0) == (h.deadlocks > 0)


@pytest.mark.parametrize("seed", range(12))
def test_witnessed_tuples_against_brute_force(seed):
    p = parse(random_program(100 + seed, size=9))
    for t in enumerate_traces(p, 2).traces[:40]:
        real: dict = {}
        for e, pos in t.rf:
            real.setdefault(e, []).append(pos)
        assert witnessed_tuples(_profile(real), 3) == brute_force_witnessed(t, 3)


def test_same_event_edges_count_in_both_orders():
    p = parse("var x; var y; var r; thread main { R: r = x + y; }")
    (t,) = enumerate_traces(p, 1)
    ex, ey = RfEdge("__init_x", "R", "x"), RfEdge("__init_y", "R", "y")
    g = ground_abstract_trace([t], 2)
    assert {(ex, ey), (ey, ex)} <= g.tuples(2)


def test_build_trace_positions():
    p = parse(RACE)
    t = build_trace(p, [("__init_x", False), ("__init_r", False), ("t0#2", False), ("A", False), ("B", False)], COMPLETE)
    assert t.rf == ((RfEdge("A", "B", "x"), 4),)
    assert t.so == ((SoEdge("__init_x", "A", "x"), 3), (SoEdge("__init_r", "B", "r"), 4))


def test_include_so_sets():
    en = enumerate_traces(parse(RACE), 2)
    g = ground_abstract_trace(en, 2, include_so=True)
    assert g.sets is not None
    assert (SoEdge("__init_x", "A", "x"), RfEdge("A", "B", "x")) in g.sets
    assert ground_abstract_trace(en, 2).sets is None


def test_deterministic():
    p = fixtures.load("mot1_a")
    assert enumerate_traces(p, 2).traces == enumerate_traces(p, 2).traces
    assert explore_ground(p, 2, 2) == explore_ground(p, 2, 2)


def test_soundness_report_flags_missing_edges():
    p = fixtures.load("mot1_a")
    static = analyze(p, 2)
    ground = explore_ground(p, 2, 2)
    assert check_soundness(static, ground).ok
    # pretend the analysis forgot an edge
    from dataclasses import replace

    victim = next(iter(ground.rf))
    broken = replace(static, may_rf=static.may_rf - {victim})
    rep = check_soundness(broken, ground)
    assert rep.rf_violations == [victim] and not rep.ok


def test_no_traces_is_an_error():
    p = parse(RACE)
    empty = ground_abstract_trace([], 1)
    with pytest.raises(OracleError, match="incomplete"):
        check_soundness(analyze(p), empty)


# edges the static analysis must keep; the oracle confirms each is real
@pytest.mark.parametrize(
    "src, edge",
    [
        ("var x; var c; var r; thread main { A: x = 1; B: if (c) { C: x = 2; } D: r = x; }", ("A", "D")),
        ("var x; var c; var r; thread main { create(w); J: if (c) { join(w); } R: r = x; } thread w { W: x = 1; }", ("__init_x", "R")),
        ("var x; thread main { L: while (x < 2) { I: x = x + 1; } }", ("I", "I")),
    ],
)
def test_small_programs_are_sound(src, edge):
    p = parse(src)
    g = explore_ground(p, 3, 2)
    rep = check_soundness(analyze(p, 2), g)
    assert rep.ok
    assert edge in {(e.store, e.load) for e in g.rf}
