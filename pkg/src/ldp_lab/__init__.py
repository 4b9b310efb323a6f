"""Large-deviation experiments for stochastic integrals driven by
infinite-dimensional semimartingales on finite measure spaces."""
from .core import (CadlagPath, DiscreteMeasureSpace, GridFunction, RandomStream, TimeGrid,
                   uniform_metric)
from .errors import (ConfigError, CoverageError, DimensionError, InsufficientDataError,
                     InvalidAdversaryError, InvalidInputError, InvalidKernelError, LdpLabError,
                     ScenarioError, UnboundedError)
from . import basis, drivers, integrate, mc, orlicz, rate, sde

__version__ = "0.1.0"

__all__ = [
    "CadlagPath", "DiscreteMeasureSpace", "GridFunction", "RandomStream", "TimeGrid",
    "uniform_metric", "ConfigError", "CoverageError", "DimensionError", "InsufficientDataError",
    "InvalidAdversaryError", "InvalidInputError", "InvalidKernelError", "LdpLabError",
    "ScenarioError", "UnboundedError", "basis", "drivers", "integrate", "mc", "orlicz", "rate",
    "sde", "__version__",
]
