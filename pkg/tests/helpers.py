"""Shared generators and reference evaluators for the test suite."""

from __future__ import annotations

import itertools
import random

from ecdiff.datalog import Database, Relation, RuleProgram, neq, rule, stratify, variables

MAX_RELATIONS = 5
MAX_RULES = 8


def random_rule_program(seed: int):
    rng = random.Random(seed)
    n_rel = rng.randint(1, MAX_RELATIONS - 2)
    arity = {f"R{i}": rng.randint(1, 2) for i in range(n_rel)}
    base = {"B0": 2, "B1": 1}
    rels = {**base, **arity}
    pool = variables("p q r s")
    rules = []
    for _ in range(rng.randint(1, MAX_RULES)):
        head_idx = rng.randrange(n_rel)
        head = f"R{head_idx}"
        body = []
        bound = set()
        for _ in range(rng.randint(1, 3)):
            # positive atoms may use the head's relation and anything below it
            choices = list(base) + [f"R{i}" for i in range(head_idx + 1)]
            name = rng.choice(choices)
            terms = tuple(rng.choice(pool[:3]) for _ in range(rels[name]))
            body.append(Relation(name, rels[name])(*terms))
            bound |= set(terms)
        if not bound:
            continue
        bound = sorted(bound, key=lambda v: v.name)
        if rng.random() < 0.5:
            # negation only on base relations or strictly lower ones
            choices = list(base) + [f"R{i}" for i in range(head_idx)]
            name = rng.choice(choices)
            body.append(~Relation(name, rels[name])(*(rng.choice(bound) for _ in range(rels[name]))))
        if len(bound) >= 2 and rng.random() < 0.3:
            body.append(neq(bound[0], bound[1]))
        head_terms = tuple(rng.choice(bound) for _ in range(arity[head]))
        rules.append(rule(Relation(head, arity[head])(*head_terms), *body))
    dom = range(rng.randint(2, 4))
    facts = {
        "B0": {(x, y) for x in dom for y in dom if rng.random() < 0.4},
        "B1": {(x,) for x in dom if rng.random() < 0.6},
    }
    return RuleProgram(rules, dict(rels)), facts


def brute_force(facts, rp):
    """Iterate every rule over every variable assignment until nothing changes, stratum by stratum."""
    db = {name: set(ts) for name, ts in facts.items()}
    for name in rp.arities:
        db.setdefault(name, set())
    dom = sorted({x for ts in facts.values() for t in ts for x in t})
    for stratum in stratify(rp):
        rules = [r for r in rp.rules if r.head.rel in stratum]
        changed = True
        while changed:
            changed = False
            for r in rules:
                vs = sorted({v for atom in r.body for v in atom.vars()} | r.head.vars(), key=lambda v: v.name)
                for values in itertools.product(dom, repeat=len(vs)):
                    env = dict(zip(vs, values))
                    ok = all(
                        (tuple(env.get(t, t) for t in atom.terms) in db[atom.rel]) != atom.negated
                        for atom in r.body
                    ) and all(
                        tuple(env.get(t, t) for t in cn.left) != tuple(env.get(t, t) for t in cn.right)
                        for cn in r.constraints
                    )
                    if ok:
                        t = tuple(env[x] for x in r.head.terms)
                        if t not in db[r.head.rel]:
                            db[r.head.rel].add(t)
                            changed = True
    return Database(db)
