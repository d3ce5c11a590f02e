"""Exception hierarchy shared across the package.

Errors are grouped so the command-line layer can map them onto exit codes:
``ConfigError`` -> 2, ``DataError`` -> 3, ``ResourceError`` -> 4.
"""


class GraphAugmentError(Exception):
    """Base class for every error raised by this package."""


# -- graph core ---------------------------------------------------------------

class GraphError(GraphAugmentError, ValueError):
    """A graph violates its structural invariants."""


class InvalidOrdering(GraphError):
    pass


class MalformedSequence(GraphError):
    pass


class TooLargeForEnumeration(GraphError):
    pass


class InvalidBlockSize(GraphError):
    pass


# -- data ---------------------------------------------------------------------

class DataError(GraphAugmentError):
    """Problems with dataset contents or files."""


class EmptyDataset(DataError, ValueError):
    pass


class MissingDatasetFile(DataError, FileNotFoundError):
    pass


class CorruptDataset(DataError):
    pass


class ParseError(DataError):
    def __init__(self, path, line_no, message):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")


class InsufficientClassSize(DataError):
    pass


class UnsupportedVersion(DataError):
    pass


class CorruptFile(DataError):
    pass


class ClassMismatch(DataError):
    pass


class MissingNodeLabels(DataError):
    pass


class GraphTooLarge(DataError):
    pass


class InvalidTarget(GraphAugmentError, ValueError):
    pass


# -- numerics -----------------------------------------------------------------

class ShapeError(GraphAugmentError, ValueError):
    pass


class NumericalError(GraphAugmentError, ArithmeticError):
    pass


class ContractViolation(GraphAugmentError):
    pass


# -- pipeline -----------------------------------------------------------------

class ConfigError(GraphAugmentError):
    pass


class PlanMismatch(ConfigError):
    pass


class ResourceError(GraphAugmentError):
    """The configured memory budget cannot accommodate the requested work."""


class IoError(DataError, OSError):
    """An output location could not be written."""
