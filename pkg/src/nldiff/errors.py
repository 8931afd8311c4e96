"""Exception hierarchy shared by every nldiff module."""


class NldiffError(Exception):
    """Base class; ``kind`` is the stable name written by the CLI."""

    kind = "Error"

    def __str__(self):
        return self.args[0] if self.args else self.kind


class ConfigError(NldiffError):
    kind = "ConfigError"


class ExprSyntaxError(NldiffError):
    """Malformed expression text.

    ``offset`` is a byte offset into the UTF-8 encoding of the source and
    ``expected`` the set of tokens that would have been accepted there.
    """

    kind = "SyntaxError"

    def __init__(self, message, offset, expected=()):
        super().__init__(message)
        self.offset = offset
        self.expected = frozenset(expected)


class UnknownIdentifier(NldiffError):
    kind = "UnknownIdentifier"

    def __init__(self, name, offset):
        super().__init__(f"unknown identifier {name!r} at offset {offset}")
        self.name = name
        self.offset = offset


class EvalError(NldiffError):
    kind = "EvalError"


class NegativeVariance(EvalError):
    kind = "NegativeVariance"


class UnstableStep(NldiffError):
    kind = "UnstableStep"


class NonFinite(NldiffError):
    kind = "NonFinite"


class GridMismatch(NldiffError):
    kind = "GridMismatch"


class HypothesisViolated(NldiffError):
    kind = "HypothesisViolated"


class PreconditionError(ConfigError):
    kind = "PreconditionError"
