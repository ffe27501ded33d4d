"""Exception taxonomy shared by all modules.

The CLI maps these onto exit codes: validation/format problems exit 1,
resource exhaustion exits 2, oracle mismatches exit 3.
"""

from __future__ import annotations


class MascError(Exception):
    """Base class for every error raised deliberately by this package."""

    exit_code = 1


class ValidationError(MascError, ValueError):
    """Input violates a documented precondition."""


class FormatError(ValidationError):
    """A file does not conform to its declared on-disk format."""


class GenerationError(MascError, RuntimeError):
    """A synthetic fixture could not be generated with the requested parameters."""


class ResourceError(MascError, MemoryError):
    exit_code = 2


class VerificationError(MascError):
    """Optimised and reference implementations disagree."""

    exit_code = 3
