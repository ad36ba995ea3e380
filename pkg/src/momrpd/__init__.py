"""Multi-objective multi-robot pickup and delivery: scalarized fleet policy,
adaptive weight sampling, baselines and evaluation measures."""

from .weights import WeightVector

__all__ = ["WeightVector"]
__version__ = "0.1.0"
