"""Exception types shared across the package."""


class PreftuneError(Exception):
    """Base class for all package errors."""


class ContractViolation(PreftuneError, ValueError):
    """An argument or state violated a documented precondition."""


class CapacityError(PreftuneError):
    """A requested structure would exceed a configured size cap."""


class NumericalError(PreftuneError):
    """An iterative numerical procedure failed to converge or factorize."""


class ConfigError(PreftuneError, ValueError):
    """Invalid user-facing configuration (presets, plans, CLI arguments)."""


class StalledUserError(PreftuneError):
    """Too many consecutive no-preference responses; the loop cannot proceed."""


class ReplayMismatchError(PreftuneError):
    """A recorded log is structurally incompatible with the current code."""
