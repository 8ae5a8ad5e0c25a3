"""Exception types. Each carries the process exit code the CLI maps it to."""

from __future__ import annotations


class SeqRankError(Exception):
    exit_code = 1


class InvariantError(SeqRankError):
    """A constructed value violates a documented invariant (a program error)."""

    exit_code = 1


class UsageError(SeqRankError):
    exit_code = 2


class ConfigurationError(UsageError):
    pass


class ParseError(SeqRankError):
    exit_code = 3

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(ParseError):
    pass


class ItemMismatchError(ParseError):
    pass


class DegeneracyError(SeqRankError):
    """The requested eigenvector (or ordering) is not uniquely determined."""

    exit_code = 4


class AngleUndefinedError(DegeneracyError):
    def __init__(self, index: int, modulus: float):
        self.index = index
        self.modulus = modulus
        super().__init__(
            f"eigenvector entry {index} has modulus {modulus:.3g}; its angle is undefined"
        )


class UndefinedMetricError(DegeneracyError):
    pass


class DisconnectedGraphError(SeqRankError):
    exit_code = 5

    def __init__(self, components: list[list[int]]):
        self.components = components
        shown = "; ".join(str(c) for c in components[:5])
        more = "" if len(components) <= 5 else f" (+{len(components) - 5} more)"
        super().__init__(
            f"measurement graph has {len(components)} connected components: {shown}{more}"
        )


class ConvergenceError(SeqRankError):
    exit_code = 6

    def __init__(self, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"power iteration did not converge in {iterations} iterations "
            f"(residual {residual:.3e})"
        )
