"""
Exception hierarchy and error payloads for the EventNLOS toolkit
"""

import json
import logging
import sys
from typing import Any, Dict, List, Optional

from pydantic import ValidationError as PydanticValidationError

logger = logging.getLogger("eventnlos.exceptions")


class NlosError(Exception):
    """Base exception for the toolkit"""

    def __init__(self, message: str, code: str = "NLOS_ERROR", details: Dict[str, Any] = None):
        self.message = message
        self.code = code
        self.details = details or {}
        super().__init__(self.message)

    def with_context(self, **context: Any) -> "NlosError":
        """Attach extra context (sample id, path, ...) and return self"""
        self.details.update(context)
        return self


class ValidationError(NlosError):
    """Invalid argument or configuration value"""

    def __init__(self, message: str, field: str = None, details: Dict[str, Any] = None):
        super().__init__(message, "VALIDATION_ERROR", details)
        self.field = field


class NotFoundError(NlosError):
    """Artifact not found error"""

    def __init__(self, resource: str, identifier: str = None):
        message = f"{resource} not found"
        if identifier:
            message += f": {identifier}"
        super().__init__(message, "NOT_FOUND", {"resource": resource})


class StorageError(NlosError):
    """Storage operation error"""

    def __init__(self, operation: str, message: str, details: Dict[str, Any] = None):
        super().__init__(f"Storage {operation} error: {message}", "STORAGE_ERROR", details)


class VerificationFailed(NlosError):
    def __init__(self, problems: List[str]):
        super().__init__(f"Manifest verification found {len(problems)} problem(s)", "VERIFICATION_FAILED",
                         {"problems": problems})


# --- event_core -------------------------------------------------------------

class InvalidWindow(NlosError):
    def __init__(self, t0: int, t1: int):
        super().__init__(f"Invalid time window [{t0}, {t1})", "INVALID_WINDOW", {"t0": t0, "t1": t1})


class EventFormatError(NlosError):
    """Base for event stream decoding errors"""


class BadMagic(EventFormatError):
    def __init__(self, found: bytes):
        super().__init__(f"Bad magic bytes: {found!r}", "BAD_MAGIC", {"found": found.hex()})


class BadVersion(EventFormatError):
    def __init__(self, version: int):
        super().__init__(f"Unsupported format version: {version}", "BAD_VERSION", {"version": version})


class TruncatedRecord(EventFormatError):
    def __init__(self, message: str, details: Dict[str, Any] = None):
        super().__init__(message, "TRUNCATED_RECORD", details)


class CountMismatch(EventFormatError):
    def __init__(self, declared: int, found: int):
        super().__init__(
            f"Header declares {declared} records, found {found}",
            "COUNT_MISMATCH",
            {"declared": declared, "found": found},
        )


class ParseError(EventFormatError):
    def __init__(self, line: int, message: str):
        super().__init__(f"Parse error at line {line}: {message}", "PARSE_ERROR", {"line": line})
        self.line = line


# --- forward_model ----------------------------------------------------------

class PoseOutOfBounds(NlosError):
    def __init__(self, dx_m: float, dy_m: float):
        super().__init__(
            f"Pose ({dx_m:.4f}, {dy_m:.4f}) m places the target outside the grid",
            "POSE_OUT_OF_BOUNDS",
            {"dx_m": dx_m, "dy_m": dy_m},
        )


class EmptyTrajectory(NlosError):
    def __init__(self):
        super().__init__("Trajectory has no knots", "EMPTY_TRAJECTORY")


# --- event_sim --------------------------------------------------------------

class MismatchedDims(NlosError):
    def __init__(self, index: int, expected: tuple, found: tuple):
        super().__init__(
            f"Frame {index} has shape {found}, expected {expected}",
            "MISMATCHED_DIMS",
            {"index": index, "expected": list(expected), "found": list(found)},
        )


class NonMonotonicTimestamps(NlosError):
    def __init__(self, index: int):
        super().__init__(
            f"Frame timestamps not strictly increasing at frame {index}",
            "NON_MONOTONIC_TIMESTAMPS",
            {"index": index},
        )


class TooFewFrames(NlosError):
    def __init__(self, count: int):
        super().__init__(f"At least 2 frames required, got {count}", "TOO_FEW_FRAMES", {"count": count})


# --- features ---------------------------------------------------------------

class EmptyStream(NlosError):
    def __init__(self):
        super().__init__("Event stream is empty", "EMPTY_STREAM")


class IndexOutOfRange(NlosError):
    def __init__(self, index: int, size: int):
        super().__init__(f"Event index {index} out of range for {size} events", "INDEX_OUT_OF_RANGE",
                         {"index": index, "size": size})


# --- reconstruct ------------------------------------------------------------

class DimMismatch(NlosError):
    def __init__(self, message: str, details: Dict[str, Any] = None):
        super().__init__(message, "DIM_MISMATCH", details)


class SingularKernel(NlosError):
    def __init__(self):
        super().__init__("Kernel transfer function has zeros and lambda is 0", "SINGULAR_KERNEL")


class SingularSystem(NlosError):
    def __init__(self, message: str = "Normal equations are singular (lambda = 0, rank-deficient design)"):
        super().__init__(message, "SINGULAR_SYSTEM")


class NonFiniteLoss(NlosError):
    def __init__(self, epoch: int):
        super().__init__(f"Loss became non-finite at epoch {epoch}", "NON_FINITE_LOSS", {"epoch": epoch})
        self.epoch = epoch


# --- metrics ----------------------------------------------------------------

class NoForeground(NlosError):
    def __init__(self, which: Optional[str] = None):
        message = "Image has no foreground row"
        if which:
            message += f" ({which})"
        super().__init__(message, "NO_FOREGROUND", {"which": which} if which else {})
        self.which = which


def is_usage_error(exc: BaseException) -> bool:
    """Command line parsing errors raised by typer (missing option, bad value, unknown command)"""
    return getattr(exc, "exit_code", None) == 2 and callable(getattr(exc, "format_message", None))


def error_payload(exc: BaseException) -> Dict[str, Any]:
    """Render an exception as the machine-readable error document"""
    if isinstance(exc, NlosError):
        return {"error": {"code": exc.code, "message": exc.message, "details": exc.details}}

    if isinstance(exc, PydanticValidationError):
        return {
            "error": {
                "code": "VALIDATION_ERROR",
                "message": "Configuration validation failed",
                "details": {"errors": json.loads(exc.json())},
            }
        }

    if is_usage_error(exc):
        return {"error": {"code": "USAGE_ERROR", "message": exc.format_message(),
                          "details": {"exception_type": type(exc).__name__}}}

    return {"error": {"code": "INTERNAL_ERROR", "message": "An unexpected error occurred",
                      "details": {"exception_type": type(exc).__name__, "reason": str(exc)}}}


def handle_cli_error(exc: BaseException) -> int:
    """Log the error, print its payload to stderr and return the exit code"""
    payload = error_payload(exc)
    if isinstance(exc, (NlosError, PydanticValidationError)) or is_usage_error(exc):
        logger.error(f"{payload['error']['code']} - {payload['error']['message']}")
        exit_code = 2
    else:
        logger.error(f"Unexpected error: {exc}", exc_info=True)
        exit_code = 1

    sys.stderr.write(json.dumps(payload, default=str) + "\n")
    sys.stderr.flush()
    return exit_code
