"""Exception hierarchy shared across the package.

Exit codes used by the CLI: 0 ok, 2 config error, 3 numerical failure,
4 capacity (state space too large).
"""


class VibrecoilError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(VibrecoilError):
    """Malformed or physically invalid configuration."""

    exit_code = 2


class AssemblyError(VibrecoilError):
    """Generator assembly is missing required kernel data."""

    exit_code = 2


class NumericsError(VibrecoilError):
    """Integration or eigensolver failure."""

    exit_code = 3


class CapacityError(VibrecoilError):
    """Requested state space exceeds the configured memory cap."""

    exit_code = 4
