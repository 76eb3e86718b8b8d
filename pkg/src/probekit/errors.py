"""Exception hierarchy shared by all probekit modules."""

from __future__ import annotations


class ProbekitError(Exception):
    """Base class for every error raised by probekit."""


class ArgumentError(ProbekitError, ValueError):
    """An argument violates an operation's precondition."""


class GeometryError(ProbekitError, ValueError):
    """A boundary description is not a valid closed star-shaped curve."""


class AdmissibilityError(GeometryError):
    """A configuration violates the a-priori hypotheses.

    ``violations`` holds one message per violated hypothesis, each starting
    with the hypothesis tag it enforces, e.g. ``"(H2) dist(D,∂Ω) ≥ δ̃"``.
    """

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class ResolutionError(ProbekitError):
    """A grid or mesh is too coarse for the requested geometry."""


class AssemblyError(ProbekitError):
    """Finite element assembly produced a singular or invalid system."""


class SingularityError(ProbekitError, ValueError):
    """A kernel was evaluated at (or on the interface through) its pole."""


class RangeError(ProbekitError, ValueError):
    """A probe point or depth leaves its admissible range."""


class DomainError(ProbekitError, ValueError):
    """A point lies outside the region where an identity or bound holds."""


class FormatError(ProbekitError):
    """A persisted file does not follow its binary or text format."""


class InternalError(ProbekitError):
    """Inputs computed for different configurations were mixed."""


class ConfigError(ProbekitError):
    """A configuration file could not be parsed.

    ``line`` and ``column`` are 1-based when known.
    """

    def __init__(self, message, line=None, column=None, path=None):
        self.line = line
        self.column = column
        self.path = path
        where = ""
        if line is not None:
            where = f" (line {line}, column {column})"
        super().__init__(f"{message}{where}")
