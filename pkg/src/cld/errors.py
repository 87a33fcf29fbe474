"""Exception types raised across the package.

Every error is a subclass of :class:`CldError` so callers (notably the CLI)
can catch the whole family in one place.
"""

from __future__ import annotations


class CldError(Exception):
    pass


# --- loss-log loading / format ---

class MissingFile(CldError):
    pass


class MalformedRow(CldError):
    pass


class NonFiniteLoss(CldError):
    pass


class NegativeLoss(CldError):
    pass


class DuplicateSampleId(CldError):
    pass


class GridMismatch(CldError):
    pass


class InvalidGrid(CldError):
    pass


class InvalidLog(CldError):
    pass


class EmptyGrid(CldError):
    pass


class UnknownIndex(CldError):
    pass


# --- scoring ---

class LengthMismatch(CldError):
    pass


class TooShort(CldError):
    pass


class MissingClassValidation(CldError):
    def __init__(self, label: int):
        super().__init__(f"no validation trajectory for class {label}")
        self.label = label


class IdMismatch(CldError):
    pass


# --- selection ---

class BudgetTooLarge(CldError):
    pass


class QuotaExceedsClass(CldError):
    pass


class SizeTooLarge(CldError):
    pass


# --- trainer ---

class DivergedLoss(CldError):
    def __init__(self, epoch: int, message: str = ""):
        super().__init__(message or f"non-finite loss at epoch {epoch}")
        self.epoch = epoch


# --- theory diagnostics ---

class MissingSnapshots(CldError):
    pass


class AllStepsZero(CldError):
    pass


# --- attribution ---

class ConstantVector(CldError):
    pass


class UnknownId(CldError):
    pass


# --- cost model ---

class MissingParam(CldError):
    def __init__(self, name: str, method: str = ""):
        where = f" (required by {method})" if method else ""
        super().__init__(f"missing scenario parameter '{name}'{where}")
        self.name = name
