"""Exception hierarchy shared by all modules."""


class LdpLabError(Exception):
    """Base class for errors raised by ldp_lab."""


class DimensionError(LdpLabError, ValueError):
    """Grids, spaces or dimensions do not match."""


class InvalidInputError(LdpLabError, ValueError):
    """An argument violates a documented precondition."""


class CoverageError(LdpLabError, ValueError):
    """A point lies outside the region covered by a partition of unity."""


class UnboundedError(LdpLabError, ArithmeticError):
    """A quantity overflowed or has no finite value."""


class InvalidKernelError(LdpLabError, ValueError):
    """A transition matrix is not row-stochastic."""


class InvalidAdversaryError(LdpLabError, ValueError):
    """An integrand handed to a UET check leaves the unit ball."""


class InsufficientDataError(LdpLabError, ValueError):
    """Too few usable Monte Carlo scales for a decay fit."""


class ScenarioError(LdpLabError, ValueError):
    """A scenario or diagnostic was configured outside its safe range."""


class ConfigError(LdpLabError, ValueError):
    """A configuration file failed to parse or validate."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        self.bare_message = message
        if path is not None and line is not None:
            message = f"{path}:{line}: {message}"
        elif path is not None:
            message = f"{path}: {message}"
        super().__init__(message)
