"""Exception types shared across the package.

Every error raised by library code derives from VapError so callers can
catch one base type at pipeline boundaries.
"""

from __future__ import annotations


class VapError(Exception):
    """Base class for all package errors."""


# --- ingest -----------------------------------------------------------------

class MissingPath(VapError):
    """A required file or directory does not exist."""


class UnreadableFrame(VapError):
    """A frame file exists but cannot be decoded, or breaks clip geometry."""


class EmptySequence(VapError):
    """A clip source contained zero frames."""


class InvalidDimensions(VapError):
    """Target width/height violate the 8-pixel grid contract."""


class InvalidCount(VapError):
    """A sample or selection count is outside [1, T]."""


class InvalidFps(VapError):
    """A frame rate is zero, negative, or non-finite."""


class DecoderUnavailable(VapError):
    """Container decoding was requested but no external decoder is installed."""


# --- latents ----------------------------------------------------------------

class ShapeMismatch(VapError):
    """Two tensors (or a tensor and a config) disagree on shape."""


class FingerprintMismatch(VapError):
    """Latents produced under different encoder configs were mixed."""


class CorruptEntry(VapError):
    """A serialized latent payload failed structural or checksum validation."""


# --- prior / remote protocol --------------------------------------------------

class RemoteUnavailable(VapError):
    """The predictor endpoint could not be reached after retries."""


class RemoteProtocolError(VapError):
    """The predictor endpoint answered, but not per the wire contract."""


# --- select -----------------------------------------------------------------

class NonFiniteInput(VapError):
    """A metric input contained NaN or infinity."""


class LengthMismatch(VapError):
    """Two sequences that must align frame-for-frame have different lengths."""


class NotEnoughEligible(VapError):
    """Fewer eligible indices exist than the requested selection size."""


# --- vlm client ---------------------------------------------------------------

class TemplateArityMismatch(VapError):
    """An item's option count does not fit the prompt template's slots."""


class MissingPlaceholder(VapError):
    """A prompt template body lacks a placeholder the renderer must fill."""


class Unauthorized(VapError):
    """The completion endpoint rejected the configured credentials."""


class RateLimited(VapError):
    """The completion endpoint kept throttling past the retry budget."""


class TransportError(VapError):
    """Network failure or malformed payload when talking to the VLM."""


class Unparseable(VapError):
    """Model output did not contain an answer in the expected format."""


# --- eval harness -------------------------------------------------------------

class SchemaViolation(VapError):
    """A dataset line does not satisfy its declared schema."""

    def __init__(self, message: str, line_no: int | None = None,
                 field: str | None = None):
        loc = []
        if line_no is not None:
            loc.append(f"line {line_no}")
        if field is not None:
            loc.append(f"field {field!r}")
        suffix = f" ({', '.join(loc)})" if loc else ""
        super().__init__(message + suffix)
        self.line_no = line_no
        self.field = field


class ItemMismatch(VapError):
    """Result records and dataset items do not align one-to-one."""


class OptionOutOfRange(VapError):
    """A multi-select answer references an option index that does not exist."""


class TaskFailed(VapError):
    """The task under latency measurement raised; measurement aborted."""


# --- synth world ----------------------------------------------------------------

class InfeasibleConfig(VapError):
    """World parameters cannot be satisfied (e.g. windows cannot be disjoint)."""


class IoError(VapError):
    """Filesystem failure while writing or reading corpus artifacts."""


# --- cli ------------------------------------------------------------------------

class ConfigError(VapError):
    """A config file line or flag value could not be interpreted."""
