"""Command-line front end: ``ecdiff {analyze,diff,oracle,check}``.

Exit codes: 0 no difference, 1 difference found, 2 usage or input error,
3 invariant or soundness violation.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .diff import iterative_diff, parse_map
from .errors import EcdiffError, InvariantViolation, ParseError
from .facts import extract_facts
from .frontend import Program, parse
from .oracle import check_diff_consistency, check_soundness, explore_ground
from .rules import analyze, extend_trace

OK, DIFFERENT, USAGE, VIOLATION = 0, 1, 2, 3

# --dump accepts these spellings as well as raw relation names
DUMP_ALIASES = {
    "mustHb": "MustHb",
    "mayHb": "MayHb",
    "mayRf": "MayRf",
    "noRf": "NoRf",
    "mayRfs": "MayRfs",
    "noRfs": "NoRfs",
    "mayRfs3": "MayRfs3",
    "noRfs3": "NoRfs3",
}


class _UsageError(Exception):
    pass


def _load(path: str) -> Program:
    f = Path(path)
    if not f.is_file():
        raise _UsageError(f"no such file: {path}")
    try:
        return parse(f.read_text())
    except ParseError as e:
        raise _UsageError(f"{path}:{e}") from None


def _trace_at(p: Program, rank: int, access_restriction: bool = True):
    t = analyze(p, 1, access_restriction=access_restriction)
    for k in range(2, rank + 1):
        t = extend_trace(t, k)
    return t


def _edges(tuples) -> list:
    return sorted([[e.store, e.load, e.var] for e in tup] for tup in tuples)


def cmd_analyze(args) -> int:
    p = _load(args.program)
    if args.facts:
        facts = extract_facts(p)
        if args.format == "json":
            print(facts.to_json())
        else:
            for name, tuples in facts.to_dict().items():
                print(f"{name} ({len(tuples)})")
                for t in tuples:
                    print("  " + " ".join(t))
        return OK
    if args.rank > 1 and args.no_access_restriction:
        # higher ranks reuse the rank-1 database, which is built with the restriction
        raise _UsageError("--no-access-restriction only applies at rank 1")
    t = _trace_at(p, args.rank, access_restriction=not args.no_access_restriction)
    for w in t.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if args.dump:
        name = DUMP_ALIASES.get(args.dump, args.dump)
        if name not in t.db:
            raise _UsageError(f"unknown relation {args.dump!r} at rank {args.rank}")
        rows = sorted(t.db[name])
        if args.format == "json":
            print(json.dumps({name: [list(r) for r in rows]}, indent=2))
        else:
            print(f"{name} ({len(rows)})")
            for r in rows:
                print("  " + " ".join(map(str, r)))
        return OK
    if args.format == "json":
        out = {
            "rank": t.rank,
            "mayRf": _edges((e,) for e in t.may_rf),
            "mayHb": len(t.may_hb),
            "mustHb": len(t.must_hb),
            "warnings": t.warnings,
        }
        for k in range(2, t.rank + 1):
            out[f"mayRfs{k}"] = _edges(t.tuples(k))
        print(json.dumps(out, indent=2))
    else:
        print(f"rank {t.rank}: mustHb {len(t.must_hb)}, mayHb {len(t.may_hb)}, mayRf {len(t.may_rf)}")
        for e in sorted(t.may_rf):
            print(f"  RF({e.store},{e.load}) on {e.var}")
        for k in range(2, t.rank + 1):
            print(f"ordered {k}-tuples: {len(t.tuples(k))}")
    return OK


def cmd_diff(args) -> int:
    p1, p2 = _load(args.first), _load(args.second)
    mapping = None
    if args.map:
        f = Path(args.map)
        if not f.is_file():
            raise _UsageError(f"no such file: {args.map}")
        mapping = parse_map(f.read_text())
    rep = iterative_diff(p1, p2, max_rank=args.max_rank, explicit_map=mapping)
    print(rep.to_json() if args.format == "json" else rep.to_text())
    return DIFFERENT if rep.found else OK


def cmd_oracle(args) -> int:
    p = _load(args.program)
    g = explore_ground(p, args.loop_bound, args.rank)
    if args.json or args.format == "json":
        print(
            json.dumps(
                {
                    "loop_bound": args.loop_bound,
                    "rank": g.rank,
                    "rf": _edges((e,) for e in g.rf),
                    "so": sorted(list(e) for e in g.so),
                    "tuples": {str(k): _edges(g.tuples(k)) for k in range(2, g.rank + 1)},
                    "terminal_configurations": g.trace_count,
                    "deadlocks": g.deadlocks,
                    "pruned": g.pruned,
                },
                indent=2,
            )
        )
    else:
        print(f"loop bound {args.loop_bound}: {g.trace_count} terminal configurations, {g.deadlocks} deadlocked")
        if g.pruned:
            print("some runs were cut at the loop bound")
        for e in sorted(g.rf):
            print(f"  RF({e.store},{e.load}) on {e.var}")
        for k in range(2, g.rank + 1):
            print(f"witnessed ordered {k}-tuples: {len(g.tuples(k))}")
    return OK


def cmd_check(args) -> int:
    p1, p2 = _load(args.first), _load(args.second)
    rep = iterative_diff(p1, p2, max_rank=args.max_rank)
    k = args.max_rank
    grounds = []
    bad = False
    out: dict = {"soundness": {}}
    for side, p in (("first", p1), ("second", p2)):
        g = explore_ground(p, args.loop_bound, k)
        grounds.append(g)
        s = check_soundness(_trace_at(p, k), g)
        bad |= not s.ok
        out["soundness"][side] = {
            "rf_violations": _edges((e,) for e in s.rf_violations),
            "set_violations": _edges(s.set_violations),
            "imprecision": s.imprecision,
            "pruned": s.pruned,
        }
    problems = check_diff_consistency(rep, *grounds)
    bad |= bool(problems)
    out["consistency"] = problems
    out["diff"] = rep.to_dict()
    if args.format == "json":
        print(json.dumps(out, indent=2))
    else:
        print(f"soundness at loop bound {args.loop_bound}, rank {k}:")
        for side, s in out["soundness"].items():
            n = len(s["rf_violations"]) + len(s["set_violations"])
            note = " (some runs cut at the loop bound)" if s["pruned"] else ""
            print(f"  {side}: {n} violations, {s['imprecision']} unobserved mayRf edges{note}")
            for v in s["rf_violations"] + s["set_violations"]:
                print(f"    {v}")
        print(f"diff consistency: {len(problems)} problems")
        for msg in problems:
            print(f"  {msg}")
        print(rep.to_text())
    if bad:
        return VIOLATION
    return DIFFERENT if rep.found else OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ecdiff", description="Compare synchronization behaviour of two program versions.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    fmt = argparse.ArgumentParser(add_help=False)
    fmt.add_argument("--format", choices=("text", "json"), default="text")

    a = sub.add_parser("analyze", parents=[fmt], help="static analysis of one program")
    a.add_argument("program")
    a.add_argument("--rank", type=int, choices=(1, 2, 3), default=1)
    a.add_argument("--facts", action="store_true", help="print the extracted base facts and stop")
    a.add_argument("--dump", metavar="RELATION", help="print one relation (mustHb, mayHb, mayRf, noRf, mayRfs, ...)")
    a.add_argument("--no-access-restriction", action="store_true", help="compute MayHb over all statements")
    a.set_defaults(func=cmd_analyze)

    d = sub.add_parser("diff", parents=[fmt], help="iterative abstraction-refinement diff")
    d.add_argument("first")
    d.add_argument("second")
    d.add_argument("--max-rank", type=int, choices=(1, 2, 3), default=3)
    d.add_argument("--map", help="file of '<label> -> <label>' lines")
    d.set_defaults(func=cmd_diff)

    o = sub.add_parser("oracle", parents=[fmt], help="bounded interleaving enumeration")
    o.add_argument("program")
    o.add_argument("--loop-bound", type=int, default=3)
    o.add_argument("--rank", type=int, choices=(1, 2, 3), default=2)
    o.add_argument("--json", action="store_true", help="same as --format json")
    o.set_defaults(func=cmd_oracle)

    c = sub.add_parser("check", parents=[fmt], help="diff plus soundness against the oracle")
    c.add_argument("first")
    c.add_argument("second")
    c.add_argument("--loop-bound", type=int, default=3)
    c.add_argument("--max-rank", type=int, choices=(1, 2, 3), default=3)
    c.set_defaults(func=cmd_check)
    return ap


def run(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:  # argparse exits 2 on bad usage, 0 on --help
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "loop_bound", 1) < 1:
        print("ecdiff: --loop-bound must be at least 1", file=sys.stderr)
        return USAGE
    try:
        return args.func(args)
    except InvariantViolation as e:
        print(f"ecdiff: invariant violated: {e}", file=sys.stderr)
        return VIOLATION
    except (_UsageError, EcdiffError, OSError) as e:
        print(f"ecdiff: {e}", file=sys.stderr)
        return USAGE


def main() -> None:
    sys.exit(run())
