"""Exception hierarchy shared by all wavedepth modules."""


class WavedepthError(Exception):
    """Base class for every error raised by this package."""


class FormatError(WavedepthError, ValueError):
    """A file on disk does not follow the expected layout."""


class UnsupportedFormat(FormatError):
    pass


class BadMagic(FormatError):
    pass


class TruncatedPayload(FormatError):
    pass


class NonFiniteData(FormatError):
    pass


class ShapeMismatch(WavedepthError, ValueError):
    """Array or layer dimensions are inconsistent with each other."""


class ChannelMismatch(ShapeMismatch):
    pass


class TooSmall(ShapeMismatch):
    pass
