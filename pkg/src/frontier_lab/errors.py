"""Exception hierarchy shared across the library."""


class FrontierLabError(Exception):
    """Base class for all library errors."""


class DomainError(FrontierLabError, ValueError):
    """An input lies outside the mathematical domain of an operation."""


class SingularityError(FrontierLabError, ValueError):
    """A linear solve or ratio is degenerate (zero variance, singular system)."""


class DegenerateStructureError(FrontierLabError, ValueError):
    """A model structure admits no bounded solution (e.g. equal loadings)."""


class InsufficientDataError(FrontierLabError, ValueError):
    """Too few observations / points for the requested estimate."""


class ShapeError(FrontierLabError, ValueError):
    """Array dimensions do not conform."""


class DataFormatError(FrontierLabError, ValueError):
    """An input file is missing, malformed, or violates the panel schema."""
