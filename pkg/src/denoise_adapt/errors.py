"""Exception hierarchy shared by all modules.

Three broad categories map onto CLI exit codes: configuration problems
(exit 2), data problems (exit 3), and numeric failures (exit 4).
"""

from __future__ import annotations


class ToolkitError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigError(ToolkitError):
    """Invalid configuration, flags, or parameter combinations."""

    exit_code = 2


class DataError(ToolkitError):
    """Malformed, missing, or inconsistent data."""

    exit_code = 3


class NumericError(ToolkitError):
    """Numeric failure during training or evaluation."""

    exit_code = 4


# corpus ---------------------------------------------------------------

class MalformedRecordError(DataError):
    def __init__(self, line_no: int, reason: str):
        super().__init__(f"line {line_no}: {reason}")
        self.line_no = line_no


class DuplicateIdError(DataError):
    def __init__(self, utterance_id: str):
        super().__init__(f"duplicate utterance id {utterance_id!r}")
        self.utterance_id = utterance_id


class MissingAudioError(DataError):
    def __init__(self, utterance_id: str):
        super().__init__(
            f"utterance {utterance_id!r} lacks surrogate_audio but the dataset is paired"
        )
        self.utterance_id = utterance_id


class UnexpectedAudioError(DataError):
    def __init__(self, utterance_id: str):
        super().__init__(
            f"utterance {utterance_id!r} carries surrogate_audio in a text-only training split"
        )
        self.utterance_id = utterance_id


class InvalidCountError(ConfigError):
    pass


class InvalidTauError(ConfigError):
    pass


# noising --------------------------------------------------------------

class EmptyInputError(DataError):
    pass


class DimensionMismatchError(DataError):
    pass


class ZeroVectorError(DataError):
    pass


# prompting ------------------------------------------------------------

class MissingInputError(DataError):
    pass


class EmptyTargetError(DataError):
    pass


class TemplateCollisionError(DataError):
    pass


# batching -------------------------------------------------------------

class EmptyDatasetError(DataError):
    pass


class WeightViewMismatchError(ConfigError):
    pass


class IoError(DataError):
    pass


# tinylm ---------------------------------------------------------------

class NonFiniteLossError(NumericError):
    pass


class VocabOverflowError(DataError):
    pass


# eval -----------------------------------------------------------------

class EmptyReferenceError(DataError):
    pass


class DivisionByZeroError(NumericError):
    pass


class InconsistentDomainsError(DataError):
    pass
