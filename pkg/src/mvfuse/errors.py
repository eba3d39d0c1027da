"""Exception and warning types raised across the pipeline."""


class MvfuseError(Exception):
    """Base class for all pipeline errors."""


class EmptyFrame(MvfuseError):
    pass


class DegenerateCloud(MvfuseError):
    pass


class OutOfRange(MvfuseError):
    pass


class InsufficientData(MvfuseError):
    pass


class DimensionMismatch(MvfuseError):
    pass


class ViewMismatch(MvfuseError):
    pass


class FrameTagMismatch(MvfuseError):
    pass


class LengthMismatch(MvfuseError):
    pass


class FrameSetMismatch(MvfuseError):
    pass


class FormatError(MvfuseError):
    """Base class for file format problems."""


class ParseError(FormatError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CountMismatch(FormatError):
    pass


class BadMagic(FormatError):
    pass


class TruncatedFile(FormatError):
    pass


class AdapterMismatch(FormatError):
    pass


class ConfigError(MvfuseError):
    pass


class RankDeficient(UserWarning):
    """The requested number of components exceeds the numerical rank of the data."""


class SingularSystem(UserWarning):
    """The fusion normal matrix was near-singular and had to be regularized."""
