"""Intraday seasonality analysis of high-frequency crypto price data."""

from hfseason.errors import ConfigError, DataError, HFSeasonError, NumericalError

__version__ = "0.1.0"

__all__ = ["ConfigError", "DataError", "HFSeasonError", "NumericalError", "__version__"]
