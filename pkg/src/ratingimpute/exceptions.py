"""Exception hierarchy shared across the package."""


class RatingImputeError(Exception):
    """Base class for all package errors."""


class ParseError(RatingImputeError, ValueError):
    """Raised when a ratings file cannot be parsed.

    ``row`` is the 1-based line number in the source file, when known.
    """

    def __init__(self, message, row=None):
        if row is not None:
            message = f"line {row}: {message}"
        super().__init__(message)
        self.row = row


class EmptyDataError(RatingImputeError, ValueError):
    pass


class DegenerateColumnError(RatingImputeError, ValueError):
    """A column has no observed entries, so its scale is undefined."""

    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(f"columns with no observed ratings: {self.columns}")


class DimensionError(RatingImputeError, ValueError):
    pass


class EstimatabilityError(RatingImputeError):
    """The rating-provider graph is disconnected.

    ``components`` holds the column index blocks of the graph.
    """

    def __init__(self, components, message=None):
        self.components = [sorted(c) for c in components]
        if message is None:
            message = (f"data set is not estimatable: rating-provider graph has "
                       f"{len(self.components)} components {self.components}")
        super().__init__(message)


class Level1Error(RatingImputeError):
    """Some missing entries have no fully observed corner set."""

    def __init__(self, entries):
        self.entries = [tuple(int(v) for v in e) for e in entries]
        shown = self.entries[:10]
        more = "" if len(self.entries) <= 10 else f" (+{len(self.entries) - 10} more)"
        super().__init__(f"data set is not level-1 estimatable; entries without "
                         f"observed corners: {shown}{more}")


class SolverError(RatingImputeError):
    pass


class CapacityError(RatingImputeError):
    """The dense linear system would exceed the configured size cap."""

    def __init__(self, size, cap):
        self.size = size
        self.cap = cap
        super().__init__(f"{size} missing entries exceeds the dense QP-AS cap of {cap}; "
                         f"use dqp-svas instead")


class GenerationError(RatingImputeError):
    pass


class FoldError(RatingImputeError):
    pass


class MultipleImputationError(RatingImputeError):
    pass


class ConfigError(RatingImputeError, ValueError):
    pass
