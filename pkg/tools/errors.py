"""
errors.py — Exception hierarchy for the EEG diffusion toolkit
--------------------------------------------------------------

Every failure raised by the toolkit derives from `EEGDMError`. The CLI and the
HTTP routers translate the two families into exit codes / status codes:

- validation family (bad config, malformed data, bad arguments) -> exit code 2
- `NumericalError` (training divergence, non-finite sampler state) -> exit code 3
"""


class EEGDMError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 2


class ConfigError(EEGDMError):
    """Run configuration missing, unparsable or invalid."""


class RecordingError(EEGDMError, ValueError):
    pass


class SegmentationError(EEGDMError, ValueError):
    pass


class SplitError(EEGDMError, ValueError):
    pass


class FormatError(EEGDMError, ValueError):
    """EEGB container could not be decoded."""


class MalformedHeaderError(FormatError):
    pass


class TruncatedPayloadError(FormatError):
    pass


class ShapeMismatchError(FormatError):
    pass


class AugmentError(EEGDMError, ValueError):
    pass


class PcaError(EEGDMError, ValueError):
    pass


class EncoderError(EEGDMError, ValueError):
    pass


class DiTError(EEGDMError, ValueError):
    pass


class DiffusionError(EEGDMError, ValueError):
    pass


class DownstreamError(EEGDMError, ValueError):
    pass


class CheckpointError(EEGDMError, ValueError):
    pass


class ManifestError(EEGDMError, ValueError):
    pass


class NumericalError(EEGDMError, ArithmeticError):
    """Non-finite loss or sampler state."""

    exit_code = 3
