"""Exception hierarchy shared across the toolkit.

Every error raised by this package derives from :class:`ToolkitError`, so
callers can catch one type at a pipeline boundary and decide whether to
abort the run or mark a single item as failed.
"""

from __future__ import annotations


class ToolkitError(Exception):
    """Base class for all errors raised by this package."""


class MissingFileError(ToolkitError):
    """A referenced file does not exist on disk."""


class FormatError(ToolkitError):
    """A file exists but cannot be decoded as the expected format."""


class EncodingError(ToolkitError):
    """Content cannot be serialized to the requested format."""


class InvariantViolation(ToolkitError):
    """A content object or argument violates a structural invariant."""


class InvalidPlanError(ToolkitError):
    """A perturbation plan is internally inconsistent."""


class TooFewFramesError(ToolkitError):
    """A temporal video operator needs more frames than the input has."""


class BackendError(ToolkitError):
    """Base class for model backend failures."""


class AuthError(BackendError):
    """Credentials are missing or rejected. Not retryable."""


class TransportError(BackendError):
    """The backend could not be reached, or kept failing after retries."""


class ProtocolError(BackendError):
    """The backend replied with a payload we cannot interpret."""


class UnsupportedModalityError(BackendError):
    """The backend cannot carry the requested content modality."""


class EmptyCaptionError(BackendError):
    """A captioning call returned blank output."""


class UnparseableVerdictError(BackendError):
    """An equivalence judge reply contained neither a yes nor a no."""


class CaptionError(ToolkitError):
    """Captioning failed for one sample during uncertainty estimation.

    Carries the index of the offending sample so batch callers can report
    which draw broke.
    """

    def __init__(self, message: str, sample_index: int | None = None):
        super().__init__(message)
        self.sample_index = sample_index


class JudgeError(ToolkitError):
    """The equivalence judge failed on one pair during clustering.

    Carries the pair of caption strings that was being compared.
    """

    def __init__(self, message: str, pair: tuple[str, str] | None = None):
        super().__init__(message)
        self.pair = pair


class MixedModalitySetsError(ToolkitError):
    """Responses in one estimation batch disagree on output modalities."""


class DegenerateLabelsError(ToolkitError):
    """A ranking metric needs both positive and negative labels."""


class DegenerateFitError(ToolkitError):
    """A log-log fit needs at least two distinct positive noise scales."""


class ConfigError(ToolkitError):
    """A run configuration is malformed.

    ``pointer`` is a JSON-pointer-style path to the offending field, when
    known.
    """

    def __init__(self, message: str, pointer: str | None = None):
        super().__init__(message)
        self.pointer = pointer
