"""Bottom-up Datalog evaluation with stratified negation.

Rules are built from :class:`Relation` handles::

    po, hb = Relation("Po", 2), Relation("HB", 2)
    a, b, c = variables("a b c")
    program = RuleProgram([
        rule(hb(a, b), po(a, b)),
        rule(hb(a, c), hb(a, b), hb(b, c)),
    ])
    db = evaluate({"Po": {("s1", "s2"), ("s2", "s3")}}, program)

Negated atoms are written ``~rel(...)``; inequality constraints with
:func:`neq`. Evaluation is semi-naive per stratum; ``naive=True`` selects the
plain re-derive-everything loop, kept as a reference implementation.
"""

from __future__ import annotations

import gc
import itertools
from collections import defaultdict
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Mapping, Sequence

import networkx as nx

from .errors import DatalogError, StratificationError


@dataclass(frozen=True)
class Var:
    name: str

    def __repr__(self) -> str:
        return self.name


class _Wildcard:
    def __repr__(self) -> str:
        return "_"


#: Anonymous variable; every occurrence is a fresh variable.
ANY = _Wildcard()
_fresh = itertools.count()


def variables(names: str) -> tuple[Var, ...]:
    return tuple(Var(n) for n in names.replace(",", " ").split())


@dataclass(frozen=True)
class Atom:
    rel: str
    terms: tuple[Any, ...]
    negated: bool = False

    def __invert__(self) -> Atom:
        return Atom(self.rel, self.terms, not self.negated)

    def vars(self) -> set[Var]:
        return {t for t in self.terms if isinstance(t, Var)}

    def __repr__(self) -> str:
        args = ", ".join(repr(t) for t in self.terms)
        return f"{'!' if self.negated else ''}{self.rel}({args})"


@dataclass(frozen=True)
class Neq:
    """Tuple inequality: satisfied when ``left`` and ``right`` differ somewhere."""

    left: tuple[Any, ...]
    right: tuple[Any, ...]

    def vars(self) -> set[Var]:
        return {t for t in self.left + self.right if isinstance(t, Var)}

    def __repr__(self) -> str:
        return f"{self.left} != {self.right}"


def neq(left: Any, right: Any) -> Neq:
    left = left if isinstance(left, tuple) else (left,)
    right = right if isinstance(right, tuple) else (right,)
    if len(left) != len(right):
        raise DatalogError("inequality between tuples of different length")
    return Neq(left, right)


class Relation:
    """Callable handle producing atoms of a fixed arity."""

    def __init__(self, name: str, arity: int):
        self.name = name
        self.arity = arity

    def __call__(self, *terms: Any) -> Atom:
        if len(terms) != self.arity:
            raise DatalogError(f"{self.name} expects {self.arity} arguments, got {len(terms)}")
        return Atom(self.name, tuple(terms))

    def __repr__(self) -> str:
        return f"Relation({self.name}/{self.arity})"


def _freshen(atom: Atom) -> Atom:
    if not any(t is ANY for t in atom.terms):
        return atom
    terms = tuple(Var(f"_{next(_fresh)}") if t is ANY else t for t in atom.terms)
    return Atom(atom.rel, terms, atom.negated)


@dataclass(frozen=True)
class Rule:
    head: Atom
    body: tuple[Atom, ...]
    constraints: tuple[Neq, ...] = ()

    def __post_init__(self) -> None:
        if self.head.negated:
            raise DatalogError(f"negated head in rule {self}")
        if any(t is ANY for t in self.head.terms):
            raise DatalogError(f"anonymous variable in head of {self}")
        positive = set()
        for atom in self.body:
            if not atom.negated:
                positive |= atom.vars()
        if not positive and self.head.vars():
            raise DatalogError(f"rule {self} has no positive body atom binding its head")
        unbound = self.head.vars() - positive
        for atom in self.body:
            if atom.negated:
                unbound |= atom.vars() - positive
        for c in self.constraints:
            unbound |= c.vars() - positive
        if unbound:
            names = ", ".join(sorted(v.name for v in unbound))
            raise DatalogError(f"rule {self} is not range restricted: {names}")

    def __repr__(self) -> str:
        parts = [repr(a) for a in self.body] + [repr(c) for c in self.constraints]
        return f"{self.head!r} <- {' & '.join(parts)}"


def rule(head: Atom, *body: Atom | Neq) -> Rule:
    atoms = tuple(_freshen(b) for b in body if isinstance(b, Atom))
    constraints = tuple(b for b in body if isinstance(b, Neq))
    return Rule(head, atoms, constraints)


@dataclass
class RuleProgram:
    rules: list[Rule]
    arities: dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for r in self.rules:
            for atom in (r.head, *r.body):
                known = self.arities.setdefault(atom.rel, len(atom.terms))
                if known != len(atom.terms):
                    raise DatalogError(
                        f"relation {atom.rel} used with arity {len(atom.terms)} and {known}"
                    )

    @property
    def derived(self) -> set[str]:
        return {r.head.rel for r in self.rules}

    def extend(self, other: RuleProgram) -> RuleProgram:
        return RuleProgram(self.rules + other.rules, {**self.arities, **other.arities})


class Database(Mapping[str, frozenset]):
    """Immutable map from relation name to a set of constant tuples."""

    def __init__(self, relations: Mapping[str, Iterable[tuple]] | None = None):
        self._rels: dict[str, frozenset] = {
            name: frozenset(tuple(t) for t in tuples) for name, tuples in (relations or {}).items()
        }

    @classmethod
    def _trusted(cls, relations: dict[str, frozenset]) -> Database:
        db = cls()
        db._rels = relations
        return db

    def __getitem__(self, name: str) -> frozenset:
        return self._rels[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._rels)

    def __len__(self) -> int:
        return len(self._rels)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Mapping):
            return NotImplemented
        names = {n for n in self if self[n]} | {n for n in other if other[n]}
        return all(self.get(n, frozenset()) == frozenset(other.get(n, ())) for n in names)

    def __repr__(self) -> str:
        sizes = ", ".join(f"{n}:{len(t)}" for n, t in sorted(self._rels.items()))
        return f"Database({sizes})"

    def query(self, relation: str, pattern: Sequence[Any] | None = None) -> list[tuple]:
        return query(self, relation, pattern)


def query(db: Mapping[str, Iterable[tuple]], relation: str, pattern: Sequence[Any] | None = None) -> list[tuple]:
    """Tuples of ``relation`` matching ``pattern`` (constants or ``ANY``/``None``), sorted."""
    if relation not in db:
        raise DatalogError(f"unknown relation {relation}")
    tuples = db[relation]
    if pattern is not None:
        pattern = tuple(pattern)
        tuples = [
            t
            for t in tuples
            if len(t) == len(pattern)
            and all(p is ANY or p is None or p == x for p, x in zip(pattern, t))
        ]
    return sorted(tuples, key=lambda t: tuple(map(str, t)))


# -- stratification ---------------------------------------------------------


def _dependency_graph(rp: RuleProgram) -> nx.DiGraph:
    graph = nx.DiGraph()
    derived = rp.derived
    graph.add_nodes_from(derived)
    for r in rp.rules:
        for atom in r.body:
            if atom.rel not in derived:
                continue
            neg = graph.get_edge_data(atom.rel, r.head.rel, {}).get("negative", False)
            graph.add_edge(atom.rel, r.head.rel, negative=neg or atom.negated)
    return graph


def stratify(rp: RuleProgram) -> list[list[str]]:
    """Group derived relations into strata; negation only reads lower strata."""
    graph = _dependency_graph(rp)
    sccs = list(nx.strongly_connected_components(graph))
    for comp in sccs:
        for a, b, data in graph.subgraph(comp).edges(data=True):
            if data["negative"]:
                back = nx.shortest_path(graph.subgraph(comp), b, a)
                cycle = " -> ".join([a, *back])
                raise StratificationError(f"not stratifiable: negative cycle {cycle}")
    cond = nx.condensation(graph, sccs)
    level: dict[int, int] = {}
    for node in nx.topological_sort(cond):
        lvl = 0
        for pred in cond.predecessors(node):
            neg = any(
                graph.edges[a, b]["negative"]
                for a in cond.nodes[pred]["members"]
                for b in cond.nodes[node]["members"]
                if graph.has_edge(a, b)
            )
            lvl = max(lvl, level[pred] + (1 if neg else 0))
        level[node] = lvl
    strata: dict[int, list[str]] = defaultdict(list)
    for node, lvl in level.items():
        strata[lvl].extend(cond.nodes[node]["members"])
    return [sorted(strata[i]) for i in sorted(strata)]


# -- evaluation ---------------------------------------------------------------


class _Store:
    """Interned tuples of one relation plus lazily built column indexes."""

    __slots__ = ("tuples", "indexes")

    def __init__(self, tuples: Iterable[tuple] = ()):
        self.tuples: set[tuple] = set(tuples)
        self.indexes: dict[tuple[int, ...], dict[tuple, list[tuple]]] = {}

    def add_all(self, new: Iterable[tuple]) -> None:
        if not self.indexes:
            self.tuples.update(new)
            return
        for t in new:
            self.tuples.add(t)
            for cols, index in self.indexes.items():
                index.setdefault(tuple(t[c] for c in cols), []).append(t)

    def index(self, cols: tuple[int, ...]) -> dict[tuple, list[tuple]]:
        index = self.indexes.get(cols)
        if index is None:
            index = defaultdict(list)
            for t in self.tuples:
                index[tuple(t[c] for c in cols)].append(t)
            index = self.indexes[cols] = dict(index)
        return index


_EMPTY = _Store()


@dataclass
class _Scan:
    atom_pos: int
    rel: str
    from_delta: bool
    key_cols: tuple[int, ...]
    key_src: tuple[tuple[bool, int], ...]  # (is_slot, slot-or-constant)
    binds: tuple[tuple[int, int], ...]  # (column, slot) first occurrences
    checks: tuple[tuple[int, int], ...]  # (column, slot) repeated in this atom


@dataclass
class _Test:
    negated_rel: str | None
    src: tuple[tuple[bool, int], ...]
    neq: tuple[tuple[tuple[bool, int], ...], tuple[tuple[bool, int], ...]] | None = None


class _CompiledRule:
    def __init__(self, r: Rule):
        self.rule = r
        slots: dict[Var, int] = {}
        for atom in r.body:
            for t in atom.terms:
                if isinstance(t, Var) and t not in slots:
                    slots[t] = len(slots)
        self.nslots = len(slots)
        self.slots = slots
        self.consts: list[Any] = []
        self.head = r.head.rel
        self.head_src = tuple(self._src(t) for t in r.head.terms)
        self.positive = [i for i, a in enumerate(r.body) if not a.negated]
        self._plans: dict[int | None, list] = {}
        self._code: dict[int | None, Any] = {}

    def _src(self, term: Any) -> tuple[bool, int]:
        if isinstance(term, Var):
            return (True, self.slots[term])
        return (False, self._const(term))

    def _const(self, value: Any) -> int:
        self.consts.append(value)
        return len(self.consts) - 1

    def plan(self, delta_pos: int | None) -> list:
        if delta_pos not in self._plans:
            self._plans[delta_pos] = self._build_plan(delta_pos)
        return self._plans[delta_pos]

    def _build_plan(self, delta_pos: int | None) -> list:
        body = self.rule.body
        bound: set[Var] = set()
        remaining = list(self.positive)
        pending_neg = [a for a in body if a.negated]
        pending_neq = list(self.rule.constraints)
        steps: list = []
        order: list[int] = []
        if delta_pos is not None:
            remaining.remove(delta_pos)
            order.append(delta_pos)
        while remaining or order:
            if order:
                pos = order.pop()
            else:
                # greedy: pure filters first, then most bound variables, then textual order
                pos = max(remaining, key=lambda i: (body[i].vars() <= bound, len(body[i].vars() & bound), -i))
                remaining.remove(pos)
            atom = body[pos]
            key_cols, key_src, binds, checks = [], [], [], []
            seen_here: set[Var] = set()
            for col, t in enumerate(atom.terms):
                if not isinstance(t, Var):
                    key_cols.append(col)
                    key_src.append((False, self._const(t)))
                elif t in bound:
                    key_cols.append(col)
                    key_src.append((True, self.slots[t]))
                elif t in seen_here:
                    checks.append((col, self.slots[t]))
                else:
                    seen_here.add(t)
                    binds.append((col, self.slots[t]))
            bound |= seen_here
            steps.append(
                _Scan(pos, atom.rel, pos == delta_pos, tuple(key_cols), tuple(key_src), tuple(binds), tuple(checks))
            )
            for a in list(pending_neg):
                if a.vars() <= bound:
                    pending_neg.remove(a)
                    steps.append(_Test(a.rel, tuple(self._src(t) for t in a.terms)))
            for c in list(pending_neq):
                if c.vars() <= bound:
                    pending_neq.remove(c)
                    src = (tuple(self._src(t) for t in c.left), tuple(self._src(t) for t in c.right))
                    steps.append(_Test(None, (), src))
        # ground negations/constraints (no variables) still need checking
        for a in pending_neg:
            steps.insert(0, _Test(a.rel, tuple(self._src(t) for t in a.terms)))
        for c in pending_neq:
            src = (tuple(self._src(t) for t in c.left), tuple(self._src(t) for t in c.right))
            steps.insert(0, _Test(None, (), src))
        return steps

    def run(self, full: dict[str, _Store], delta: dict[str, _Store] | None, delta_pos: int | None) -> set[tuple]:
        fn = self._code.get(delta_pos)
        if fn is None:
            fn = self._code[delta_pos] = _generate(self.plan(delta_pos), self.head_src, str(self.rule))
        return fn(full, delta or {}, _EMPTY, self.consts)


def _generate(steps: list, head_src: tuple, label: str):
    """Turn a join plan into straight-line nested loops and compile it."""

    def val(src: tuple[bool, int]) -> str:
        return f"v{src[1]}" if src[0] else f"k[{src[1]}]"

    def tup(srcs) -> str:
        return "(" + "".join(val(s) + ", " for s in srcs) + ")"

    pre = []
    body = []
    depth = 1
    for i, st in enumerate(steps):
        pad = "    " * depth
        if isinstance(st, _Test):
            if st.neq is not None:
                left, right = st.neq
                same = " and ".join(f"{val(a)} == {val(b)}" for a, b in zip(left, right)) or "True"
                body.append(f"{pad}if not ({same}):")
            else:
                pre.append(f"    n{i} = full.get({st.negated_rel!r}, empty).tuples")
                body.append(f"{pad}if {tup(st.src)} not in n{i}:")
            depth += 1
            continue
        src = "delta" if st.from_delta else "full"
        pre.append(f"    r{i} = {src}.get({st.rel!r}, empty)")
        arity = len(st.key_cols) + len(st.binds) + len(st.checks)
        if len(st.key_cols) == arity:
            body.append(f"{pad}if {tup(st.key_src)} in r{i}.tuples:")
            depth += 1
            continue
        if st.key_cols:
            pre.append(f"    x{i} = r{i}.index({st.key_cols!r})")
            body.append(f"{pad}for t{i} in x{i}.get({tup(st.key_src)}, ()):")
        else:
            body.append(f"{pad}for t{i} in r{i}.tuples:")
        depth += 1
        pad = "    " * depth
        for col, slot in st.binds:
            body.append(f"{pad}v{slot} = t{i}[{col}]")
        if st.checks:
            cond = " and ".join(f"t{i}[{col}] == v{slot}" for col, slot in st.checks)
            body.append(f"{pad}if {cond}:")
            depth += 1
    body.append("    " * depth + f"add({tup(head_src)})")
    lines = ["def run(full, delta, empty, k):", *pre, "    out = set()", "    add = out.add", *body, "    return out"]
    namespace: dict[str, Any] = {}
    exec(compile("\n".join(lines), f"<rule {label}>", "exec"), namespace)
    return namespace["run"]


@contextmanager
def paused_gc() -> Iterator[None]:
    """Evaluation builds millions of acyclic tuples; full collections would rescan them all."""
    was = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if was:
            gc.enable()


def evaluate(
    facts: Mapping[str, Iterable[tuple]], rp: RuleProgram, *, naive: bool = False
) -> Database:
    """Minimal model of ``rp`` over ``facts``; the result includes the input facts."""
    with paused_gc():
        return _evaluate(facts, rp, naive)


def _evaluate(facts: Mapping[str, Iterable[tuple]], rp: RuleProgram, naive: bool) -> Database:
    for name, tuples in facts.items():
        arity = rp.arities.get(name)
        if arity is None:
            continue
        for t in tuples:
            if len(t) != arity:
                raise DatalogError(f"arity mismatch for {name}: expected {arity}, got tuple {t!r}")
    strata = stratify(rp)
    full: dict[str, _Store] = {name: _Store(map(tuple, tuples)) for name, tuples in facts.items()}
    compiled = [_CompiledRule(r) for r in rp.rules]
    for stratum in strata:
        members = set(stratum)
        for name in stratum:
            full.setdefault(name, _Store())
        rules = [c for c in compiled if c.head in members]
        if naive:
            _naive(rules, full)
        else:
            _semi_naive(rules, members, full)
    return Database._trusted({name: frozenset(store.tuples) for name, store in full.items()})


def _naive(rules: list[_CompiledRule], full: dict[str, _Store]) -> None:
    changed = True
    while changed:
        changed = False
        derived: dict[str, set[tuple]] = defaultdict(set)
        for c in rules:
            derived[c.head] |= c.run(full, None, None)
        for name, tuples in derived.items():
            new = tuples - full[name].tuples
            if new:
                full[name].add_all(new)
                changed = True


def _semi_naive(rules: list[_CompiledRule], members: set[str], full: dict[str, _Store]) -> None:
    delta: dict[str, set[tuple]] = defaultdict(set)
    for c in rules:
        delta[c.head] |= c.run(full, None, None)
    for name in list(delta):
        delta[name] -= full[name].tuples
        full[name].add_all(delta[name])
    while any(delta.values()):
        delta_stores = {name: _Store(t) for name, t in delta.items() if t}
        nxt: dict[str, set[tuple]] = defaultdict(set)
        for c in rules:
            for pos in c.positive:
                rel = c.rule.body[pos].rel
                if rel in members and rel in delta_stores:
                    nxt[c.head] |= c.run(full, delta_stores, pos)
        for name in list(nxt):
            nxt[name] -= full[name].tuples
            full[name].add_all(nxt[name])
        delta = nxt
