class EcdiffError(Exception):
    """Base class for user-facing errors (exit code 2 in the CLI)."""


class ParseError(EcdiffError):
    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        where = f"{line}:{column}: " if line is not None else ""
        super().__init__(f"{where}{message}")


class StructureError(EcdiffError):
    pass


class DatalogError(EcdiffError):
    pass


class StratificationError(DatalogError):
    pass


class MatchError(EcdiffError):
    pass


class OracleError(EcdiffError):
    pass


class InvariantViolation(Exception):
    """Internal consistency check failed (exit code 3 in the CLI)."""
