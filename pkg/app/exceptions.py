"""Error types raised by the symdyn library.

All errors derive from ValueError so callers that only know the generic
contract keep working; the CLI maps them to exit codes by class.
"""


class SymdynError(ValueError):
    """Base class; ``code`` is the machine-readable reason."""

    @property
    def code(self) -> str:
        return type(self).__name__


class InvalidSeries(SymdynError):
    pass


class ZeroVariance(SymdynError):
    pass


class LagTooLarge(SymdynError):
    pass


class DataFormatError(SymdynError):
    pass


class DegeneratePartition(SymdynError):
    pass


class SequenceTooShort(SymdynError):
    pass


class NoConvergence(SymdynError):
    pass


class ZeroProbability(SymdynError):
    pass


class EmptyCluster(SymdynError):
    pass


class BadCut(SymdynError):
    pass


class BadLength(SymdynError):
    pass


class SchemaMismatch(SymdynError):
    pass
