"""
Custom exceptions for the freshness_mdp package.

This module defines a hierarchy of exceptions used throughout the package
to report invalid input, solver failures and search failures in a
structured way.
"""
from typing import Any, Dict, Optional


class FreshnessMdpError(Exception):
    """Base exception for all freshness_mdp errors.

    All other exceptions in this package inherit from this base class,
    allowing users to catch all package-specific exceptions with a single
    except clause.
    """
    def __init__(
        self,
        message: str,
        cause: Optional[Exception] = None,
        details: Optional[Dict[str, Any]] = None
    ):
        """Initialize the exception.

        Args:
            message: Human-readable error message
            cause: Original exception that caused this error, if any
            details: Additional details about the error context
        """
        self.message = message
        self.cause = cause
        self.details = details or {}

        full_message = message
        if cause:
            full_message += f" Caused by: {str(cause)}"

        super().__init__(full_message)


class ValidationError(FreshnessMdpError):
    """Exception raised when an input violates a documented invariant.

    This covers malformed models, out-of-range parameters and policies
    that select masked actions.
    """
    def __init__(
        self,
        message: str,
        field: Optional[str] = None,
        value: Optional[Any] = None,
        cause: Optional[Exception] = None,
        details: Optional[Dict[str, Any]] = None
    ):
        """Initialize the validation error.

        Args:
            message: Human-readable error message
            field: The field that failed validation, if applicable
            value: The invalid value, if applicable
            cause: Original exception that caused this error, if any
            details: Additional details about the error context
        """
        self.field = field
        self.value = value

        full_details = details or {}
        if field:
            full_details["field"] = field
        if value is not None:  # Allow value to be False or 0
            full_details["value"] = value

        super().__init__(message, cause, full_details)


class InvalidParamsError(ValidationError):
    """Exception raised when source-chain parameters are inconsistent.

    Raised for instance when p_R <= p_t, which makes updating pointless.
    """


class ParseError(FreshnessMdpError):
    """Exception raised when a configuration file cannot be parsed."""
    def __init__(
        self,
        message: str,
        source: Optional[str] = None,
        line: Optional[int] = None,
        cause: Optional[Exception] = None,
        details: Optional[Dict[str, Any]] = None
    ):
        """Initialize the parse error.

        Args:
            message: Human-readable error message
            source: Path or description of the content being parsed
            line: 1-based line number of the offending line
            cause: Original exception that caused this error, if any
            details: Additional details about the error context
        """
        self.source = source
        self.line = line

        full_details = details or {}
        if source:
            full_details["source"] = source
        if line is not None:
            full_details["line"] = line

        super().__init__(message, cause, full_details)


class ConfigurationError(FreshnessMdpError):
    """Exception raised for unknown or unusable configuration keys."""
    def __init__(
        self,
        message: str,
        parameter: Optional[str] = None,
        value: Optional[Any] = None,
        cause: Optional[Exception] = None,
        details: Optional[Dict[str, Any]] = None
    ):
        """Initialize the configuration error.

        Args:
            message: Human-readable error message
            parameter: The configuration parameter that caused the error
            value: The invalid value
            cause: Original exception that caused this error, if any
            details: Additional details about the error context
        """
        self.parameter = parameter
        self.value = value

        full_details = details or {}
        if parameter:
            full_details["parameter"] = parameter
        if value is not None:
            full_details["value"] = value

        super().__init__(message, cause, full_details)


class NonConvergenceError(FreshnessMdpError):
    """Exception raised when relative value iteration runs out of iterations."""
    def __init__(
        self,
        message: str,
        iterations: Optional[int] = None,
        span: Optional[float] = None,
        cause: Optional[Exception] = None,
        details: Optional[Dict[str, Any]] = None
    ):
        """Initialize the non-convergence error.

        Args:
            message: Human-readable error message
            iterations: Number of sweeps performed
            span: Span of the last value difference
            cause: Original exception that caused this error, if any
            details: Additional details about the error context
        """
        self.iterations = iterations
        self.span = span

        full_details = details or {}
        if iterations is not None:
            full_details["iterations"] = iterations
        if span is not None:
            full_details["span"] = span

        super().__init__(message, cause, full_details)


class MultiChainError(FreshnessMdpError):
    """Exception raised when a policy induces more than one recurrent class."""
    def __init__(
        self,
        message: str,
        n_classes: Optional[int] = None,
        cause: Optional[Exception] = None,
        details: Optional[Dict[str, Any]] = None
    ):
        self.n_classes = n_classes

        full_details = details or {}
        if n_classes is not None:
            full_details["n_classes"] = n_classes

        super().__init__(message, cause, full_details)


class TooLargeError(FreshnessMdpError):
    """Exception raised when brute-force enumeration exceeds its guard."""
    def __init__(
        self,
        message: str,
        size: Optional[int] = None,
        limit: Optional[int] = None,
        cause: Optional[Exception] = None,
        details: Optional[Dict[str, Any]] = None
    ):
        self.size = size
        self.limit = limit

        full_details = details or {}
        if size is not None:
            full_details["size"] = size
        if limit is not None:
            full_details["limit"] = limit

        super().__init__(message, cause, full_details)


class LayoutMismatchError(FreshnessMdpError):
    """Exception raised when a decision source does not fit the model's states."""


class SearchError(FreshnessMdpError):
    """Base class for failures of the Lagrangian multiplier searches.

    These map to the "infeasible search" exit code of the CLI.
    """


class DegenerateTriangleError(SearchError):
    """Exception raised when a triangle's vertices are collinear."""


class NotFoundError(SearchError):
    """Exception raised when the quadrant scan misses a sign pattern."""


class PatternNotFoundError(SearchError):
    """Exception raised when multiplier scaling never realizes a sign pattern."""
    def __init__(
        self,
        message: str,
        pattern: Optional[str] = None,
        cause: Optional[Exception] = None,
        details: Optional[Dict[str, Any]] = None
    ):
        self.pattern = pattern

        full_details = details or {}
        if pattern:
            full_details["pattern"] = pattern

        super().__init__(message, cause, full_details)


class NoSolutionError(SearchError):
    """Exception raised when the mixing equations have no acceptable root."""
    def __init__(
        self,
        message: str,
        residual: Optional[float] = None,
        cause: Optional[Exception] = None,
        details: Optional[Dict[str, Any]] = None
    ):
        self.residual = residual

        full_details = details or {}
        if residual is not None:
            full_details["residual"] = residual

        super().__init__(message, cause, full_details)


class InvalidBracketError(SearchError):
    """Exception raised when a 1-D bracket does not change sign."""


class MaxIterationsError(SearchError):
    """Exception raised when triangle bisection exhausts its outer loop."""
