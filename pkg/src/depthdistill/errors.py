"""Exception hierarchy shared across the toolkit.

Each class carries an ``exit_code`` so the CLI can map failures onto its
exit-code taxonomy without a lookup table.
"""


class DepthDistillError(Exception):
    exit_code = 1


class InvalidArgumentError(DepthDistillError, ValueError):
    exit_code = 2


class DataError(DepthDistillError, ValueError):
    exit_code = 4


class EmptyMaskError(DataError):
    """A reduction or loss was asked to operate on zero valid pixels."""


class InsufficientDataError(DataError):
    exit_code = 6


class InvalidDepthError(DataError):
    """A pixel flagged valid carries a non-finite or non-positive depth."""


class BehindCameraError(DataError):
    pass


class EmptyPatternError(DataError):
    """No scan ray falls inside the camera frustum."""


class DepthRangeError(DataError):
    pass


class AllInvalidError(DataError):
    pass


class DepthIOError(DepthDistillError, OSError):
    exit_code = 3


class CodecMismatchError(DepthIOError):
    """File magic does not match the declared codec."""


class TruncatedFileError(DepthIOError):
    pass


class ConfigError(DepthDistillError, ValueError):
    exit_code = 2

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")
