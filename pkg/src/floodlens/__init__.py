"""floodlens: flood characterization from cell-tower activity.

Ingests anonymized call-detail records, tower registries, gridded
rainfall and pre/post water-index rasters; produces per-tower activity
anomaly series, population-representativeness checks, flood masks,
rainfall-lag estimates and exportable impact maps. A deterministic
synthetic-scenario generator makes every pipeline claim testable
without proprietary data.
"""

__version__ = "0.1.0"

from .errors import DataError

__all__ = ["DataError", "__version__"]
