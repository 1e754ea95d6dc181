"""Exception hierarchy shared by every finslerlab module."""


class FinslerLabError(Exception):
    """Base class for all library errors."""


class ConfigError(FinslerLabError, ValueError):
    """Invalid jet configuration, variable id or multi-index."""


class SingularityError(FinslerLabError, ZeroDivisionError):
    """Division by a jet whose value slot is zero."""


class DomainError(FinslerLabError, ValueError):
    """A function or metric evaluated outside its domain."""


class DegenerateMetricError(FinslerLabError, ValueError):
    """The metric tensor g_ij is singular at the requested point."""


class DegenerateChangeError(FinslerLabError, ValueError):
    """The change is inadmissible at a point (m^2 = 0 or epsilon = 0)."""


class MisuseError(FinslerLabError, ValueError):
    """A special-case formula was requested outside its hypotheses."""


class SamplingError(FinslerLabError, RuntimeError):
    """No admissible sample point could be drawn."""


class ParseError(FinslerLabError, ValueError):
    """Expression syntax error; ``offset`` is the byte offset of the fault."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class CatalogError(FinslerLabError, ValueError):
    """Malformed catalog file or unknown catalog label."""
