"""Exception types shared across the pipeline."""


class StreetNavError(Exception):
    """Base class for all errors raised by this package."""


class InvalidBoxError(StreetNavError):
    """Bounding box violates x_min < x_max, y_min < y_max."""


class InsufficientDataError(StreetNavError):
    """Too few correspondences to fit a calibration."""


class DegenerateGeometryError(StreetNavError):
    """Correspondence geometry is rank-deficient (e.g. collinear points)."""


class HorizonPointError(StreetNavError):
    """Projective transform sent a point to infinity (denominator ~ 0)."""


class FrameOrderError(StreetNavError):
    """Detection frames arrived with a decreasing frame_id."""


class NoRouteError(StreetNavError):
    """Destination unreachable from the start node."""


class EmptyGraphError(StreetNavError):
    """Operation requires a non-empty routing graph."""


class FrameTooLargeError(StreetNavError):
    """Encoded wire frame exceeds the protocol's size cap."""


class DecodeError(StreetNavError):
    """Malformed wire frame; ``offset`` points at the failing byte."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class SchemaError(StreetNavError):
    """Wire message violates its per-type payload schema."""


class ScenarioError(StreetNavError):
    """Scenario file failed to parse; carries line number context."""

    def __init__(self, message: str, line: int = 0):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


class UndefinedBearingError(StreetNavError):
    """Bearing requested between coincident points."""
