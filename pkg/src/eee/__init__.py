"""Query-efficient state search driven by an estimator ensemble.

The package combines four pieces:

* an estimator ensemble that learns implicit error components from the
  validation queries spent so far,
* a seed-driven search network that proposes candidate states by gradient
  descent on the estimated overall error,
* a gated validator that only spends a real query when the estimate clears
  a confidence threshold,
* a disagreement-maximising explorer that picks the next training sample.

``eee.cli`` exposes the benchmark runner (console script ``eee-bench``).
"""
from .errors import (
    ConfigError,
    DimensionError,
    ProtocolError,
    StateError,
    UndefinedRatioError,
    ValidationInputError,
)

__all__ = [
    "ConfigError",
    "DimensionError",
    "ProtocolError",
    "StateError",
    "UndefinedRatioError",
    "ValidationInputError",
]

__version__ = "0.1.0"
