"""Zero-shot learning with visual prototypes and visual structure optimization."""

from .kernels import BACKEND
from .errors import ConfigError, DatasetError, FormatError, NonFiniteError, ShapeError, ZslError

__version__ = "0.1.0"

__all__ = ["BACKEND", "ZslError", "ShapeError", "NonFiniteError", "FormatError", "DatasetError", "ConfigError"]
