"""Small programs shipped with the package: three before/after pairs and a busy-wait."""

from __future__ import annotations

from importlib import resources

PAIRS = ("mot1", "mot2", "mot3")
NAMES = ("mot1_a", "mot1_b", "mot2_a", "mot2_b", "mot3_a", "mot3_b", "adhoc")


def source(name: str) -> str:
    return resources.files(__name__).joinpath(f"{name}.cp").read_text()


def load(name: str):
    from ..frontend import parse

    return parse(source(name))


def path(name: str) -> str:
    return str(resources.files(__name__).joinpath(f"{name}.cp"))
