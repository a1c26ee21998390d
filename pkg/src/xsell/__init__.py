"""Cross-sell purchase prediction with imbalance-aware tree ensembles,
exact per-customer SHAP attributions, and statistical procedures that test
whether the explanations are robust across folds and valid the next year."""

__version__ = "0.1.0"

from .errors import ConfigError, DataError, NumericError, XsellError
from .schema import (
    CaseDataset,
    ContractRecord,
    ContractType,
    CrossSellCase,
    CustomerProfile,
    CustomerRecord,
    GeoFeatures,
)

__all__ = [
    "CaseDataset",
    "ConfigError",
    "ContractRecord",
    "ContractType",
    "CrossSellCase",
    "CustomerProfile",
    "CustomerRecord",
    "DataError",
    "GeoFeatures",
    "NumericError",
    "XsellError",
    "__version__",
]
