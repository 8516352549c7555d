"""Exception hierarchy shared by the ledger, solver and simulators."""


class BciError(ValueError):
    """Base class for every error raised by this package."""


# -- ledger ---------------------------------------------------------------

class LedgerError(BciError):
    pass


class SelfTransaction(LedgerError):
    pass


class NegativeAmount(LedgerError):
    pass


class PeerOutOfRange(LedgerError):
    pass


class NonSquare(LedgerError):
    pass


class ParseError(LedgerError):
    """Malformed ledger file. ``line`` and ``field`` are 1-based when known."""

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field}")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)


# -- solver ---------------------------------------------------------------

class InvalidAlpha(BciError):
    pass


class DimensionMismatch(BciError):
    pass


class NonPositiveInput(BciError):
    pass


# -- simulators -----------------------------------------------------------

class ReplicationTooLarge(BciError):
    pass


class InvalidConfig(BciError):
    """Bad simulation config; ``field`` names the offending entry."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
