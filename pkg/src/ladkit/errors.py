"""Structured exceptions shared across the toolkit.

Every error carries a short machine-readable ``code`` and an optional
``context`` dict so the CLI can emit scripting-friendly JSON on stderr.
"""

from __future__ import annotations

from typing import Any


class LadkitError(Exception):
    """Base class for all toolkit errors."""

    code = "error"

    def __init__(self, message: str, **context: Any) -> None:
        super().__init__(message)
        self.message = message
        self.context = context

    def to_dict(self) -> dict:
        return {"code": self.code, "message": self.message, "context": self.context}


class ValidationError(LadkitError):
    """Invalid input data: bad shapes, non-finite values, dim mismatches."""

    code = "invalid-input"


class ParameterError(LadkitError):
    """A parameter is outside its documented range."""

    code = "bad-parameter"


class SingularCovarianceError(LadkitError):
    """Covariance inversion requested on a rank-deficient matrix."""

    code = "singular-covariance"


class ModelConstructionError(LadkitError):
    """Graph model could not be built from the given statistics."""

    code = "model-construction"


class TruncationError(LadkitError):
    """Requested component count keeps numerically-zero eigenvalues."""

    code = "truncation"


class NumericError(LadkitError):
    """A numerical routine (eigensolver, factorization) failed."""

    code = "numeric-failure"


class DataFormatError(LadkitError):
    """File contents do not match the declared on-disk format."""

    code = "data-format"


class EvaluationError(LadkitError):
    """Evaluation requested on degenerate inputs (e.g. empty truth)."""

    code = "evaluation"
