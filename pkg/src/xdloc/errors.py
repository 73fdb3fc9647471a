"""Exception types shared across the package."""


class XdlocError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatchError(XdlocError):
    """Descriptor dimensions disagree across inputs."""


class EmptyLibraryError(XdlocError):
    """No feature survived library construction."""


class FormatError(XdlocError):
    """A binary file or manifest is malformed; message carries location."""


class FingerprintMismatchError(XdlocError):
    """An artifact was built against a different library than the one supplied."""
