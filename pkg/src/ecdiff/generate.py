"""Random well-formed programs for stress and property tests."""

from __future__ import annotations

import random
import re

VARS = ("x", "y", "z", "f")
LOCKS = ("a", "b")


class _Gen:
    def __init__(self, rng: random.Random, budget: int):
        self.rng = rng
        self.budget = budget
        self.label = 0

    def expr(self) -> str:
        r = self.rng.random()
        v = self.rng.choice(VARS)
        if r < 0.35:
            return str(self.rng.randint(0, 2))
        if r < 0.6:
            return v
        if r < 0.85:
            return f"{v} + {self.rng.randint(1, 2)}"
        return f"{v} + {self.rng.choice(VARS)}"

    def cond(self) -> str:
        v = self.rng.choice(VARS)
        return self.rng.choice([f"{v} == 0", f"{v} != 0", f"{v} < 2", f"!{v}"])

    def lab(self) -> str:
        self.label += 1
        return f"S{self.label}: "

    def block(self, depth: int, held: tuple[str, ...], ind: str) -> list[str]:
        # callers guarantee budget >= 1, so a block is never empty
        out: list[str] = []
        for _ in range(self.rng.randint(1, 3)):
            if self.budget <= 0:
                break
            out += self.stmt(depth, held, ind)
        return out

    def fill(self, ind: str) -> list[str]:
        out: list[str] = []
        while self.budget > 0:
            out += self.stmt(0, (), ind)
        return out

    def stmt(self, depth: int, held: tuple[str, ...], ind: str) -> list[str]:
        # every emitted statement costs one unit of budget
        rng = self.rng
        b = self.budget
        r = rng.random()
        free = [lk for lk in LOCKS if lk not in held]
        if r < 0.45 or depth >= 2 or b < 2:
            self.budget -= 1
            return [f"{ind}{self.lab()}{rng.choice(VARS)} = {self.expr()};"]
        if r < 0.6 and free and b >= 3:
            lk = rng.choice(free)
            self.budget -= 2
            head = []
            if held == () and self.budget >= 3 and rng.random() < 0.2:
                self.budget -= 2
                head = [f"{ind}  if (!f) {{ wait(c, {lk}); }}"]
            body = head + self.block(depth + 1, held + (lk,), ind + "  ")
            return [f"{ind}lock({lk});", *body, f"{ind}unlock({lk});"]
        if r < 0.75:
            self.budget -= 1
            lines = [f"{ind}{self.lab()}if ({self.cond()}) {{", *self.block(depth + 1, held, ind + "  ")]
            if self.budget >= 1 and rng.random() < 0.5:
                lines += [f"{ind}}} else {{", *self.block(depth + 1, held, ind + "  ")]
            return lines + [f"{ind}}}"]
        if r < 0.85:
            self.budget -= 2
            v = rng.choice(VARS)
            return [f"{ind}{self.lab()}while ({v} < 2) {{", f"{ind}  {self.lab()}{v} = {v} + 1;", f"{ind}}}"]
        self.budget -= 1
        if r < 0.9:
            return [f"{ind}{self.lab()}while (f == 0) {{}}"]
        if r < 0.95:
            return [f"{ind}signal(c);"]
        return [f"{ind}{self.lab()}assert({self.cond()});"]


def random_program(seed: int, workers: int | None = None, size: int = 12, join: bool | None = None) -> str:
    """Source of a program where `main` creates 1-2 workers.

    `size` is the exact number of statements, counting create/join and
    lock/unlock but not the synthesized initialization stores.
    """
    rng = random.Random(seed)
    workers = workers if workers is not None else rng.randint(1, 2)
    join = join if join is not None else rng.random() < 0.4
    # small sizes drop the join, then a worker
    if size < workers + (2 if join else 0) + workers + 1:
        join = False
    if size < 2 * workers + 1:
        workers = 1
    if size < 3:
        raise ValueError(f"size {size} is too small; need at least 3 statements")
    reserve = workers + (2 if join else 0)
    g = _Gen(rng, 0)
    lines = [f"var {v} = {rng.randint(0, 1) if v != 'f' else 0};" for v in VARS]
    lines += [f"lock {lk};" for lk in LOCKS] + ["cond c;", ""]
    names = [f"w{i}" for i in range(workers)]
    main = [f"  create({n});" for n in names]
    rest = size - reserve
    share = max(1, rest // (workers + 1))
    bodies = {}
    for n in names:
        g.budget = share
        bodies[n] = g.fill("  ")
    g.budget = rest - share * workers
    main += g.fill("  ")
    if join:
        main.append(f"  join({names[0]});")
        g.budget = 1
        main += g.fill("  ")
    lines += ["thread main {", *main, "}"]
    for n in names:
        lines += [f"thread {n} {{", *bodies[n], "}"]
    return "\n".join(lines) + "\n"


_ASSIGN = re.compile(r"^(\s*)(S\d+: )(\w+) = (.+);$")


def mutate(source: str, seed: int) -> str:
    """A one-edit variant of a generated program: a constant right-hand side,
    or a top-level assignment wrapped in lock(b)."""
    rng = random.Random(seed)
    lines = source.split("\n")
    spots = [i for i, ln in enumerate(lines) if _ASSIGN.match(ln)]
    if not spots:
        return source
    i = rng.choice(spots)
    indent, label, var, _rhs = _ASSIGN.match(lines[i]).groups()
    if indent == "  " and rng.random() < 0.5:
        lines[i:i + 1] = [f"{indent}lock(b);", lines[i], f"{indent}unlock(b);"]
    else:
        lines[i] = f"{indent}{label}{var} = {rng.randint(0, 2)};"
    return "\n".join(lines)
