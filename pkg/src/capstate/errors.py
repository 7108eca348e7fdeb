"""Exception types shared across the package.

``ValueError`` is raised for plain API misuse (bad parameters, wrong shapes).
The classes below mark conditions the CLI maps to distinct exit codes.
"""


class CapstateError(Exception):
    """Base class for package-specific failures."""


class ConfigError(CapstateError):
    """Invalid or inconsistent run configuration."""


class DataError(CapstateError):
    """Input files missing or malformed; message names the file (and row when known)."""


class NumericalError(CapstateError):
    """A numerical procedure failed (non-convergence, non-finite values)."""
