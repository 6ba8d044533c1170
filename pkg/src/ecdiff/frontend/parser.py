"""Recursive-descent parser for the `.cp` concurrent mini-language."""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import ParseError
from .program import INIT_PREFIX, Binary, Const, Expr, Name, Program, Stmt, ThreadDef, Unary

_TOKEN = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>==|!=|<=|>=|[<>+\-*!=(){};:,])
    """,
    re.VERBOSE,
)

RESERVED = {"if", "else", "while", "skip", "true", "false", "thread", "var"}
ONE_ARG = {"lock", "unlock", "signal", "create", "join"}


@dataclass
class Token:
    kind: str  # "int", "ident", "op", "eof"
    text: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line, line_start = line + 1, m.end()
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, m.group(), line, m.start() - line_start + 1))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.toks = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg: str, tok: Token | None = None) -> ParseError:
        tok = tok or self.tok
        return ParseError(msg, tok.line, tok.col)

    def at(self, text: str) -> bool:
        return self.tok.kind in ("op", "ident") and self.tok.text == text

    def expect(self, text: str) -> Token:
        if not self.at(text):
            found = self.tok.text or "end of input"
            raise self.error(f"expected {text!r}, found {found!r}")
        tok = self.tok
        self.i += 1
        return tok

    def ident(self) -> Token:
        tok = self.tok
        if tok.kind != "ident" or tok.text in RESERVED:
            raise self.error(f"expected a name, found {tok.text or 'end of input'!r}")
        self.i += 1
        return tok

    # -- declarations

    def program(self):
        globals_, locks, conds, threads = [], [], [], []
        while self.tok.kind != "eof":
            tok = self.tok
            if self.at("var"):
                self.i += 1
                name = self.ident()
                value = 0
                if self.at("="):
                    self.i += 1
                    value = self.constant()
                self.expect(";")
                globals_.append((name, value))
            elif tok.kind == "ident" and tok.text in ("lock", "cond") and self.peek().kind == "ident":
                self.i += 1
                name = self.ident()
                self.expect(";")
                (locks if tok.text == "lock" else conds).append(name)
            elif self.at("thread"):
                self.i += 1
                name = self.ident()
                threads.append((name, self.block()))
            else:
                raise self.error(f"expected a declaration, found {tok.text!r}")
        return globals_, locks, conds, threads

    def constant(self) -> int:
        neg = False
        if self.at("-"):
            self.i += 1
            neg = True
        tok = self.tok
        if tok.kind == "int":
            self.i += 1
            return -int(tok.text) if neg else int(tok.text)
        if tok.text in ("true", "false") and not neg:
            self.i += 1
            return int(tok.text == "true")
        raise self.error("expected an integer constant")

    # -- statements

    def block(self) -> list:
        self.expect("{")
        body = []
        while not self.at("}"):
            if self.tok.kind == "eof":
                raise self.error("unterminated block")
            body.append(self.statement())
        self.expect("}")
        return body

    def statement(self) -> dict:
        label = None
        if self.tok.kind == "ident" and self.peek().text == ":" and self.tok.text not in RESERVED:
            label = self.tok
            self.i += 2
        tok = self.tok
        node: dict = {"label": label, "line": tok.line, "tok": tok}
        if self.at("if"):
            self.i += 1
            self.expect("(")
            node.update(kind="if", expr=self.expr())
            self.expect(")")
            node["then"] = self.block()
            node["orelse"] = []
            if self.at("else"):
                self.i += 1
                node["orelse"] = [self.statement()] if self.at("if") else self.block()
            return node
        if self.at("while"):
            self.i += 1
            self.expect("(")
            node.update(kind="while", expr=self.expr())
            self.expect(")")
            node["then"] = self.block()
            return node
        if self.at("skip"):
            self.i += 1
            self.expect(";")
            node["kind"] = "skip"
            return node
        name = self.ident()
        if self.at("(") and name.text in ONE_ARG | {"wait", "assert"}:
            self.i += 1
            kind = name.text
            node["kind"] = kind
            if kind == "assert":
                node["expr"] = self.expr()
            else:
                node["target"] = self.ident()
                if kind == "wait":
                    self.expect(",")
                    node["lock"] = self.ident()
            self.expect(")")
            self.expect(";")
            return node
        if self.at("="):
            self.i += 1
            node.update(kind="assign", target=name, expr=self.expr())
            self.expect(";")
            return node
        raise self.error(f"unexpected {self.tok.text!r} after {name.text!r}")

    # -- expressions: comparison < additive < multiplicative < unary

    def expr(self) -> Expr:
        left = self.additive()
        while self.tok.kind == "op" and self.tok.text in ("==", "!=", "<", "<=", ">", ">="):
            op = self.tok.text
            self.i += 1
            left = Binary(op, left, self.additive())
        return left

    def additive(self) -> Expr:
        left = self.term()
        while self.tok.kind == "op" and self.tok.text in ("+", "-"):
            op = self.tok.text
            self.i += 1
            left = Binary(op, left, self.term())
        return left

    def term(self) -> Expr:
        left = self.unary()
        while self.at("*"):
            self.i += 1
            left = Binary("*", left, self.unary())
        return left

    def unary(self) -> Expr:
        if self.tok.kind == "op" and self.tok.text in ("!", "-"):
            op = self.tok.text
            self.i += 1
            return Unary(op, self.unary())
        tok = self.tok
        if tok.kind == "int":
            self.i += 1
            return Const(int(tok.text))
        if tok.text in ("true", "false"):
            self.i += 1
            return Const(int(tok.text == "true"))
        if self.at("("):
            self.i += 1
            e = self.expr()
            self.expect(")")
            return e
        return _NameAt(self.ident())


class _NameAt(Name):
    # only lives until validation; _strip turns it back into a plain Name

    def __init__(self, tok: Token):
        object.__setattr__(self, "id", tok.text)
        object.__setattr__(self, "tok", tok)


def _strip(e: Expr) -> Expr:
    if isinstance(e, Name):
        return Name(e.id)
    if isinstance(e, Unary):
        return Unary(e.op, _strip(e.operand))
    if isinstance(e, Binary):
        return Binary(e.op, _strip(e.left), _strip(e.right))
    return e


def _name_tokens(e: Expr | None):
    if isinstance(e, _NameAt):
        yield e.tok
    elif isinstance(e, Unary):
        yield from _name_tokens(e.operand)
    elif isinstance(e, Binary):
        yield from _name_tokens(e.left)
        yield from _name_tokens(e.right)


def parse(source_text: str) -> Program:
    """Parse and validate a program; raises :class:`ParseError`."""
    if isinstance(source_text, bytes):
        source_text = source_text.decode("utf-8")
    p = _Parser(source_text)
    globals_, locks, conds, raw_threads = p.program()

    declared: dict[str, str] = {}
    for kind, toks in (("variable", [g for g, _ in globals_]), ("lock", locks), ("condition variable", conds)):
        for tok in toks:
            if tok.text in declared:
                raise ParseError(f"duplicate declaration of {tok.text}", tok.line, tok.col)
            declared[tok.text] = kind
    thread_names = set()
    for tok, _ in raw_threads:
        if tok.text in thread_names:
            raise ParseError(f"duplicate thread {tok.text}", tok.line, tok.col)
        thread_names.add(tok.text)
    if not raw_threads:
        raise ParseError("program declares no thread", 1, 1)
    names = [t.text for t, _ in raw_threads]
    entry = "main" if "main" in names else names[0]

    threads = []
    labels: set[str] = set()
    created: set[str] = set()
    for index, (tok, body) in enumerate(raw_threads):
        tname = tok.text
        if tname == entry:
            body = [
                {"label": Token("ident", f"{INIT_PREFIX}{g.text}", g.line, g.col), "kind": "assign",
                 "target": g, "expr": Const(v), "line": g.line, "tok": g, "init": True}
                for g, v in globals_
            ] + body
        counter = iter(range(1 << 30))
        stmts = [
            _build(node, tname, index, counter, labels, declared, thread_names, created, entry, False)
            for node in body
        ]
        threads.append(ThreadDef(tname, index, stmts))

    program = Program(
        [(g.text, v) for g, v in globals_], [t.text for t in locks], [t.text for t in conds],
        threads, entry, source_text,
    )
    _check_waits(program)
    return program


def _build(node, tname, tindex, counter, labels, declared, threads, created, entry, in_loop) -> Stmt:
    n = next(counter)
    label_tok = node.get("label")
    label = label_tok.text if label_tok is not None else None
    if label is not None:
        if label in labels:
            raise ParseError(f"duplicate label {label}", label_tok.line, label_tok.col)
        if label.startswith(INIT_PREFIX) and not node.get("init"):
            raise ParseError(f"label prefix {INIT_PREFIX} is reserved", label_tok.line, label_tok.col)
        labels.add(label)
    kind = node["kind"]
    tok = node["tok"]

    def need(name_tok: Token, what: str) -> str:
        if what == "thread":
            ok = name_tok.text in threads
        else:
            ok = declared.get(name_tok.text) == what
        if not ok:
            raise ParseError(f"undeclared name {name_tok.text}", name_tok.line, name_tok.col)
        return name_tok.text

    expr = node.get("expr")
    for ntok in _name_tokens(expr):
        need(ntok, "variable")
    target = lock = None
    if kind == "assign":
        target = need(node["target"], "variable")
    elif kind in ("lock", "unlock"):
        target = need(node["target"], "lock")
    elif kind in ("signal", "wait"):
        target = need(node["target"], "condition variable")
        if kind == "wait":
            lock = need(node["lock"], "lock")
    elif kind in ("create", "join"):
        target = need(node["target"], "thread")
        if target == tname:
            raise ParseError(f"thread {tname} cannot {kind} itself", tok.line, tok.col)
        if in_loop:
            raise ParseError(f"{kind} inside a loop is not supported", tok.line, tok.col)
        if kind == "create":
            if target == entry:
                raise ParseError(f"the entry thread {entry} cannot be created", tok.line, tok.col)
            if target in created:
                raise ParseError(f"thread {target} is created more than once", tok.line, tok.col)
            created.add(target)

    stmt = Stmt(
        id=label if label is not None else f"t{tindex}#{n}",
        kind=kind, thread=tname, label=label, target=target, lock=lock,
        expr=_strip(expr) if expr is not None else None, line=node["line"],
    )
    loop = in_loop or kind == "while"
    stmt.then = [
        _build(c, tname, tindex, counter, labels, declared, threads, created, entry, loop)
        for c in node.get("then", [])
    ]
    stmt.orelse = [
        _build(c, tname, tindex, counter, labels, declared, threads, created, entry, loop)
        for c in node.get("orelse", [])
    ]
    return stmt


def _check_waits(program: Program) -> None:
    from .structure import LockError, check_thread_locks

    for t in program.threads:
        try:
            check_thread_locks(t)
        except LockError as e:
            # other locking mistakes are reported by build_structure
            if e.kind == "wait":
                raise ParseError(
                    f"wait({e.stmt.target}, {e.stmt.lock}) outside a region holding {e.stmt.lock}", e.stmt.line, 1
                ) from None
