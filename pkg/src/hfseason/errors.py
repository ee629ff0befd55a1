"""Exception hierarchy; each class maps onto a CLI exit code."""

from __future__ import annotations


class HFSeasonError(Exception):
    exit_code = 1

    def __init__(self, message: str, details: list[str] | None = None):
        super().__init__(message)
        self.message = message
        self.details = list(details or [])


class ConfigError(HFSeasonError):
    exit_code = 2


class DataError(HFSeasonError):
    exit_code = 3


class SchemaError(DataError):
    pass


class NumericalError(HFSeasonError):
    exit_code = 4
