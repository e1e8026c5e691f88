"""Exception types raised across the package.

Every controlled failure derives from :class:`ShopDemandError`, which the CLI
maps to exit code 1.
"""

from __future__ import annotations


class ShopDemandError(Exception):
    """Base class for domain errors."""


# --- data -----------------------------------------------------------------


class SchemaError(ShopDemandError, ValueError):
    pass


class MissingColumn(ShopDemandError, ValueError):
    def __init__(self, name: str):
        super().__init__(f"missing column {name!r}")
        self.name = name


class MissingValue(ShopDemandError, ValueError):
    def __init__(self, row: int, column: str):
        super().__init__(f"missing value at row {row}, column {column!r}")
        self.row = row
        self.column = column


class TypeViolation(ShopDemandError, ValueError):
    def __init__(self, row: int, column: str, token: str):
        super().__init__(f"bad value {token!r} at row {row}, column {column!r}")
        self.row = row
        self.column = column


class DomainViolation(ShopDemandError, ValueError):
    def __init__(self, row: int, column: str, value: float):
        super().__init__(f"value {value!r} at row {row} not allowed for column {column!r}")
        self.row = row
        self.column = column


class InvalidRange(ShopDemandError, ValueError):
    pass


class BadFractions(ShopDemandError, ValueError):
    pass


class BadK(ShopDemandError, ValueError):
    pass


# --- models ---------------------------------------------------------------


class EmptyInput(ShopDemandError, ValueError):
    pass


class ArityMismatch(ShopDemandError, ValueError):
    pass


class LengthMismatch(ShopDemandError, ValueError):
    pass


class BadDelta(ShopDemandError, ValueError):
    pass


class EmptyResiduals(ShopDemandError, ValueError):
    pass


class SchemaMismatch(ShopDemandError, ValueError):
    pass


class ParseError(ShopDemandError, ValueError):
    pass


class VersionMismatch(ShopDemandError, ValueError):
    pass


class DegenerateResponse(ShopDemandError, ValueError):
    pass


class RankDeficient(ShopDemandError, ValueError):
    def __init__(self, term: str):
        super().__init__(f"design matrix is rank deficient at term {term!r}")
        self.term = term


# --- selection ------------------------------------------------------------


class EmptyGrid(ShopDemandError, ValueError):
    pass


class NoModelPassesGate(ShopDemandError):
    pass


class TooFewFeatures(ShopDemandError, ValueError):
    pass


# --- explain --------------------------------------------------------------


class DimLimitExceeded(ShopDemandError, ValueError):
    pass


class EmptyBackground(ShopDemandError, ValueError):
    pass


class ConstantFeature(ShopDemandError, ValueError):
    pass
