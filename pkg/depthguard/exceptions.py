"""Contains custom exceptions and validation helpers."""

from typing import Iterable, Sequence


class DepthGuardError(Exception):
    """Base class for every error raised by depthguard.

    The ``code`` attribute is a stable machine-readable tag used by the command line front end.
    """

    code = "error"

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class ShapeMismatch(DepthGuardError):
    """Custom exception used for incompatible tensor shapes."""

    code = "shape-mismatch"


class NonIntegralExtent(DepthGuardError):
    """Custom exception used when a convolution would drop input pixels."""

    code = "non-integral-extent"


class DegenerateExtent(DepthGuardError):
    """Custom exception used for spatial extents too small for an operation."""

    code = "degenerate-extent"


class DomainError(DepthGuardError):
    """Custom exception used for values outside a function's domain."""

    code = "domain-error"


class NonFiniteValue(DepthGuardError):
    """Custom exception used when NaN or Inf appears in a forward or backward result."""

    code = "non-finite"


class EmptyTensor(DepthGuardError):
    """Custom exception used for reductions over empty tensors."""

    code = "empty-tensor"


class DTypeMismatch(DepthGuardError):
    """Custom exception used when operands carry different scalar precisions."""

    code = "dtype-mismatch"


class BackwardError(DepthGuardError):
    """Custom exception used for invalid backward calls."""

    code = "backward"


class SpecError(DepthGuardError):
    """Custom exception used for invalid network specifications."""

    code = "bad-spec"


class FormatError(DepthGuardError):
    """Custom exception used for malformed binary files."""

    code = "bad-format"

    def __init__(self, detail: str, offset: int = None):
        if offset is not None:
            detail = f"{detail} (at byte offset {offset})"
        super().__init__(detail)
        self.offset = offset


class TruncatedFile(FormatError):
    """Custom exception used for files that end before their declared content."""

    code = "truncated"


class ChecksumMismatch(FormatError):
    """Custom exception used when a record checksum does not match its payload."""

    code = "checksum"


class CheckpointMismatch(DepthGuardError):
    """Custom exception used when a checkpoint does not belong to the expected network spec."""

    code = "spec-hash-mismatch"


class MissingCheckpoint(DepthGuardError):
    """Custom exception used when a configuration needs a network that was not supplied."""

    code = "missing-checkpoint"


class AttackError(DepthGuardError):
    """Custom exception used for failed adversarial example generation."""

    code = "attack"


class TrainingError(DepthGuardError):
    """Custom exception used for failed training runs."""

    code = "training"


class ConfigError(DepthGuardError):
    """Custom exception used for invalid run configuration."""

    code = "bad-config"


class DatasetError(DepthGuardError):
    """Custom exception used for invalid datasets and splits."""

    code = "bad-dataset"


class PreprocessError(DepthGuardError):
    """Custom exception used for impossible resize/crop requests."""

    code = "preprocess"


def check_shape(caller: str, shape_a: Sequence[int], shape_b: Sequence[int], field: str):
    """Verify that two shapes are identical.

    :param caller: the entity that called this function (used for error messages)
    :param shape_a: first shape
    :param shape_b: second shape
    :param field: what is being compared (used for error messages)
    :raises ShapeMismatch: the shapes differ
    """
    if tuple(shape_a) != tuple(shape_b):
        raise ShapeMismatch(f"[{caller}] {field}: {tuple(shape_a)} vs {tuple(shape_b)}")


def check_range(caller: str, value: float, lo: float, hi: float, field: str, error=DepthGuardError):
    """Verify that a scalar lies in the closed interval [lo, hi].

    :param caller: the entity that called this function (used for error messages)
    :param value: the value to test
    :param lo: lower bound
    :param hi: upper bound
    :param field: what the value is used as (used for error messages)
    :param error: exception class to raise
    """
    if not lo <= value <= hi:
        raise error(f"[{caller}] {field}={value} outside [{lo}, {hi}]")


def check_choice(caller: str, value, valid: Iterable, field: str, error=DepthGuardError):
    """Verify that the tested value is one of a set of valid values.

    :param caller: the entity that called this function (used for error messages)
    :param value: the element to test
    :param valid: the valid values
    :param field: what the element is used as (used for error messages)
    :param error: exception class to raise
    """
    valid = list(valid)
    if value not in valid:
        raise error(f"[{caller}] {value!r} is not a valid value for {field} (expected one of {valid})")
