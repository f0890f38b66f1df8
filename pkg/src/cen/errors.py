"""Exception types shared across the package."""


class CenError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(CenError, ValueError):
    """Tensor shapes are incompatible with the requested operation."""


class ConfigError(CenError, ValueError):
    """A configuration value violates a documented constraint."""


class ContractError(CenError, RuntimeError):
    """An API was called in a way that breaks its usage contract."""


class DataError(CenError, ValueError):
    """Input data is malformed or violates split/vocabulary constraints."""
