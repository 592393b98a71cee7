"""Place embeddings from mobility data, with cross-city translation.

The pipeline: raw GPS logs -> staypoint corpora -> next-place sequence
model per city -> embedding matrices -> linear translation between the
two cities' vector spaces -> landuse-based evaluation.
"""

__version__ = "0.1.0"

from citytrans.errors import CityTransError, DataError, NumericalError, UsageError

__all__ = [
    "CityTransError",
    "DataError",
    "NumericalError",
    "UsageError",
    "__version__",
]
