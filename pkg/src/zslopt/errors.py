"""Exception hierarchy shared by all modules."""


class ZslError(Exception):
    """Base class for every error raised by zslopt."""


class ShapeError(ZslError, ValueError):
    """Operands have incompatible shapes."""


class NonFiniteError(ZslError, ValueError):
    """An operation produced NaN or infinite entries."""


class FormatError(ZslError, ValueError):
    """A binary container or manifest is malformed (bad magic, version, size)."""


class DatasetError(ZslError, ValueError):
    """A dataset violates one of its invariants."""


class ConfigError(ZslError, ValueError):
    """A configuration value is missing, unknown or out of range."""
