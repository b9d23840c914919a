"""Exception hierarchy shared across the package."""


class ExactBNError(Exception):
    """Base class for all errors raised by exactbn."""


class DataError(ExactBNError):
    """Malformed or inconsistent input data."""


class TooManyVariablesError(DataError):
    """More variables than the 32-variable design limit."""


class CacheFormatError(ExactBNError):
    """Score cache file is corrupt or does not match the request."""


class MemoryBudgetError(ExactBNError):
    """A computation would exceed the configured memory budget."""
