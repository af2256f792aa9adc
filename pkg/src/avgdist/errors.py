"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class AvgDistError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(AvgDistError, ValueError):
    """Malformed graph, region, field or scene description."""


class DegenerateMeasureError(AvgDistError, ValueError):
    """A quadrature measure would have no samples."""


class DegenerateConstructionError(AvgDistError, ValueError):
    """Construction parameters fall in a degenerate regime."""


class TopologyError(AvgDistError, ValueError):
    """Graph topology does not support the requested operation."""


class GeometryError(AvgDistError, ValueError):
    """Geometric clearance or placement requirement violated."""


class SolverError(AvgDistError, RuntimeError):
    """An iterative solver failed to reach its tolerance."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual
