from __future__ import annotations

import json

import pytest

from ecdiff import fixtures
from ecdiff.diff import diff_traces, iterative_diff, match_statements, parse_map
from ecdiff.errors import EcdiffError, MatchError
from ecdiff.frontend import parse
from ecdiff.rules import RfEdge, analyze


def user_only(tuples):
    return {tuple((e.store, e.load) for e in t) for t in tuples if all(not x.startswith("__init_") for e in t for x in (e.store, e.load))}


def test_labels_and_unlabeled_statements_match():
    a, b = fixtures.load("mot2_a"), fixtures.load("mot2_b")
    c = match_statements(a, b)
    for lab in ("L1", "L2", "L3", "L4", "L5"):
        assert c.forward[lab] == lab
    # lock/unlock of each thread line up by signature
    locks_a = [s.id for s in a.stmts() if s.kind == "lock"]
    assert all(x in c.forward for x in locks_a)
    assert all(b.stmt(c.forward[x]).kind == "lock" for x in locks_a)
    # the guard, wait, flag store and signal exist only in the second version
    extra = {b.stmt(x).kind for x in c.unmatched2}
    assert {"if", "wait", "signal", "assign"} <= extra
    assert not c.unmatched1 - {"__init_cBool"}


def test_explicit_map_wins():
    a = parse("var x; thread main { A: x = 1; B: x = 2; }")
    b = parse("var x; thread main { P: x = 1; Q: x = 2; }")
    c = match_statements(a, b, {"A": "Q"})
    assert c.forward["A"] == "Q"
    # labeled statements never fall back to signature matching
    assert "B" in c.unmatched1 and "P" in c.unmatched2


def test_map_errors():
    a = parse("var x; thread main { A: x = 1; }")
    with pytest.raises(MatchError, match="unknown statement"):
        match_statements(a, a, {"Z": "A"})
    with pytest.raises(MatchError):
        match_statements(a, a, {"A": "Z"})
    two = parse("var x; thread main { A: x = 1; B: x = 1; }")
    with pytest.raises(MatchError, match="both"):
        match_statements(two, two, {"A": "A", "B": "A"})


def test_parse_map():
    text = "# comment\nL1 -> M1\n\n  L2->M2  # trailing\n"
    assert parse_map(text) == {"L1": "M1", "L2": "M2"}
    with pytest.raises(MatchError, match="line 1"):
        parse_map("L1 M1")
    with pytest.raises(MatchError, match="twice"):
        parse_map("L1 -> A\nL1 -> B")


def test_diff_mot1():
    rep = iterative_diff(fixtures.load("mot1_a"), fixtures.load("mot1_b"))
    assert rep.rank_found == 1
    assert rep.delta12 == {(RfEdge("L5", "L2", "x"),)}
    assert rep.delta21 == frozenset()
    assert rep.to_dict()["delta12"] == [[["L5", "L2"]]]


def test_diff_mot2_user_statements():
    rep = iterative_diff(fixtures.load("mot2_a"), fixtures.load("mot2_b"))
    assert rep.rank_found == 1
    assert user_only(rep.delta12) == {(("L3", "L4"),)}
    assert rep.delta21 == frozenset()
    # edges into the new guard only exist in the second version
    assert rep.patch_local_21 and not rep.patch_local_12


def test_diff_mot3_needs_rank_two():
    rep = iterative_diff(fixtures.load("mot3_a"), fixtures.load("mot3_b"))
    assert rep.rank_found == 2
    assert rep.delta12 == frozenset()
    assert rep.delta21 == {(RfEdge("L1", "L4", "x"), RfEdge("L1", "L2", "x"))}
    assert iterative_diff(fixtures.load("mot3_a"), fixtures.load("mot3_b"), max_rank=1).rank_found == 0


def test_delta_uses_first_program_names():
    a = parse("var x; var r; thread main { create(w); A: x = 1; } thread w { B: r = x; }")
    b = parse("var x; var r; lock l; thread main { lock(l); create(w); A2: x = 1; unlock(l); } thread w { lock(l); B2: r = x; unlock(l); }")
    rep = iterative_diff(a, b, explicit_map={"A": "A2", "B": "B2"})
    names = {x for t in rep.delta12 | rep.delta21 for e in t for x in (e.store, e.load)}
    assert names <= {s.id for s in a.stmts()}


def test_diff_traces_rank_mismatch():
    t1 = analyze(fixtures.load("mot1_a"), 1)
    t2 = analyze(fixtures.load("mot1_a"), 2)
    c = match_statements(t1.program, t2.program)
    with pytest.raises(EcdiffError):
        diff_traces(t1, t2, c)
    assert diff_traces(t1, t2, c, rank=1)[0] == frozenset()


def test_text_and_json_report_the_same_deltas():
    for pair in fixtures.PAIRS:
        rep = iterative_diff(fixtures.load(pair + "_a"), fixtures.load(pair + "_b"))
        data = json.loads(rep.to_json())
        text = rep.to_text()
        assert f"(delta12) ({len(data['delta12'])}):" in text
        assert f"(delta21) ({len(data['delta21'])}):" in text
        for tup in data["delta12"] + data["delta21"]:
            assert " -> ".join(f"RF({st},{ld})" for st, ld in tup) in text.replace(" on x", "").replace(" on y", "")
        assert set(data) == {"rank_found", "delta12", "delta21", "patch_local_12", "patch_local_21", "stats"}


def test_bad_max_rank():
    p = fixtures.load("mot1_a")
    with pytest.raises(EcdiffError):
        iterative_diff(p, p, max_rank=4)
