"""Base exceptions shared across HypoQuant layers."""

from typing import Any, Dict, Optional


class HypoQuantError(Exception):
    """Base exception for all HypoQuant errors."""

    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        self.message = message
        self.context = context or {}
        super().__init__(message)

    def __str__(self) -> str:
        return self.message


class DataError(HypoQuantError):
    """Input data cannot be processed (CLI exit status 2)."""


class UsageError(HypoQuantError):
    """Invalid combination of command-line options (CLI exit status 1)."""


class UnlabeledDatasetError(DataError):
    """Ground truth was requested from a dataset with unlabeled subjects."""
