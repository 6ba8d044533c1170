from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Union


@dataclass(frozen=True)
class Const:
    value: int

    def __str__(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class Name:
    id: str

    def __str__(self) -> str:
        return self.id


@dataclass(frozen=True)
class Unary:
    op: str
    operand: Expr

    def __str__(self) -> str:
        return f"{self.op}{_paren(self.operand)}"


@dataclass(frozen=True)
class Binary:
    op: str
    left: Expr
    right: Expr

    def __str__(self) -> str:
        return f"{_paren(self.left)} {self.op} {_paren(self.right)}"


Expr = Union[Const, Name, Unary, Binary]


def _paren(e: Expr) -> str:
    return f"({e})" if isinstance(e, Binary) else str(e)


def expr_names(e: Expr | None) -> frozenset[str]:
    if e is None or isinstance(e, Const):
        return frozenset()
    if isinstance(e, Name):
        return frozenset([e.id])
    if isinstance(e, Unary):
        return expr_names(e.operand)
    return expr_names(e.left) | expr_names(e.right)


SIMPLE_KINDS = ("assign", "lock", "unlock", "signal", "wait", "create", "join", "assert", "skip")
COMPOUND_KINDS = ("if", "while")


@dataclass(eq=False)
class Stmt:
    """One event-producing statement.

    ``id`` is the label when the user gave one, else ``t<thread index>#<n>``
    with ``n`` the preorder position inside the thread. ``target`` holds the
    assigned variable, the lock, condition variable or thread operand.
    """

    id: str
    kind: str
    thread: str
    label: str | None = None
    target: str | None = None
    lock: str | None = None
    expr: Expr | None = None
    then: list[Stmt] = field(default_factory=list)
    orelse: list[Stmt] = field(default_factory=list)
    line: int = 0

    @property
    def reads(self) -> frozenset[str]:
        return expr_names(self.expr)

    @property
    def writes(self) -> str | None:
        return self.target if self.kind == "assign" else None

    @property
    def body(self) -> list[Stmt]:
        return self.then

    def signature(self) -> tuple:
        """Kind, operands and accessed globals; used to align unlabeled statements."""
        operand = self.target if self.kind != "assign" else None
        return (self.kind, operand, self.lock, tuple(sorted(self.reads)), self.writes)

    def __repr__(self) -> str:
        return f"Stmt({self.id}: {self.render()})"

    def render(self) -> str:
        k = self.kind
        if k == "assign":
            return f"{self.target} = {self.expr}"
        if k in ("lock", "unlock", "signal", "create", "join"):
            return f"{k}({self.target})"
        if k == "wait":
            return f"wait({self.target}, {self.lock})"
        if k == "assert":
            return f"assert({self.expr})"
        if k in ("if", "while"):
            return f"{k} ({self.expr})"
        return "skip"


@dataclass(eq=False)
class ThreadDef:
    name: str
    index: int
    body: list[Stmt]


def walk(stmts: list[Stmt]) -> Iterator[Stmt]:
    for s in stmts:
        yield s
        yield from walk(s.then)
        yield from walk(s.orelse)


@dataclass(eq=False)
class Program:
    globals: list[tuple[str, int]]
    locks: list[str]
    conds: list[str]
    threads: list[ThreadDef]
    entry: str
    source: str = ""

    def __post_init__(self) -> None:
        self._stmts = {s.id: s for t in self.threads for s in walk(t.body)}

    @property
    def global_names(self) -> list[str]:
        return [g for g, _ in self.globals]

    def thread(self, name: str) -> ThreadDef:
        for t in self.threads:
            if t.name == name:
                return t
        raise KeyError(name)

    def stmts(self) -> Iterator[Stmt]:
        for t in self.threads:
            yield from walk(t.body)

    def stmt(self, sid: str) -> Stmt:
        return self._stmts[sid]

    def labels(self) -> set[str]:
        return {s.label for s in self.stmts() if s.label is not None}

    def user_labels(self) -> set[str]:
        return {lab for lab in self.labels() if not lab.startswith(INIT_PREFIX)}


INIT_PREFIX = "__init_"


_BINOPS = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "==": lambda a, b: int(a == b),
    "!=": lambda a, b: int(a != b),
    "<": lambda a, b: int(a < b),
    "<=": lambda a, b: int(a <= b),
    ">": lambda a, b: int(a > b),
    ">=": lambda a, b: int(a >= b),
}


def eval_expr(e: Expr, env) -> int:
    """Evaluate over integers; nonzero is true, comparisons and ``!`` give 0/1."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Name):
        return env[e.id]
    if isinstance(e, Unary):
        v = eval_expr(e.operand, env)
        return int(v == 0) if e.op == "!" else -v
    return _BINOPS[e.op](eval_expr(e.left, env), eval_expr(e.right, env))
