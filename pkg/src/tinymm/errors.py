"""Exception types shared across the toolkit."""


class TinymmError(Exception):
    """Base class for all errors raised by this package."""


# -- tensors ----------------------------------------------------------------

class ShapeMismatchError(TinymmError):
    """Data length or tensor dimensions disagree with a declared shape."""


class InvalidShapeError(TinymmError):
    """Shape has an unsupported rank or non-positive dimension."""


class RankMismatchError(TinymmError):
    """Operation received a tensor of the wrong rank."""


# -- kernels ----------------------------------------------------------------

class KernelTooLargeError(TinymmError):
    """Kernel exceeds the input's spatial extent under valid padding."""


class InputTooSmallError(TinymmError):
    """Input smaller than the pooling window."""


class PrecisionMismatchError(TinymmError):
    """Integer kernel fed operands of different bit widths."""


class AccumulatorOverflowError(TinymmError):
    """Layer dimensions could overflow the 32-bit accumulator."""


# -- quantizer --------------------------------------------------------------

class EmptyTensorError(TinymmError):
    """Quantization of an empty tensor."""


class MissingStatsError(TinymmError):
    """Affine quantization requested without calibration statistics."""


class InvalidSensitivityError(TinymmError):
    """Sensitivity table violates the coarser-never-cheaper ordering."""


# -- cost model / allocator -------------------------------------------------

class MissingAssignmentError(TinymmError):
    """Bit assignment does not cover every weighted layer."""


class InfeasibleError(TinymmError):
    """No bit assignment satisfies the given budgets."""


class SearchSpaceTooLargeError(TinymmError):
    """Brute-force enumeration refused: option count exceeds the cap."""


# -- audio / image front-ends -----------------------------------------------

class SampleRateMismatchError(TinymmError):
    """Clip sample rate differs from the feature config."""


class ClipTooShortError(TinymmError):
    """Audio clip too short to produce a single frame or chunk."""


class UnsupportedFormatError(TinymmError):
    """File is readable but not in the supported encoding."""


class CorruptFileError(TinymmError):
    """File is structurally broken or truncated."""


# -- model loading ----------------------------------------------------------

class ParseError(TinymmError):
    """Model config does not parse or fails schema validation."""


class ChecksumMismatchError(TinymmError):
    """Weight record failed its CRC32 check."""


class DanglingWeightsError(TinymmError):
    """Weight blob contains records no layer claims."""


class MissingCalibrationError(TinymmError):
    """Quantized inference requested without stats for every activation."""


class EmptyCalibrationSetError(TinymmError):
    """Calibration invoked with no inputs."""
