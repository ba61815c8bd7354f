"""Sequential anchor-guided multimodal training on a small numpy autodiff engine."""

from .errors import ConfigError, ContractError, DataError, DimensionError, NumericError, UDIError

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ContractError",
    "DataError",
    "DimensionError",
    "NumericError",
    "UDIError",
    "__version__",
]
