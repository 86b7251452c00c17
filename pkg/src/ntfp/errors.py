"""Exception hierarchy shared by every module."""


class FingerprintError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgument(FingerprintError, ValueError):
    pass


class YieldShortfall(FingerprintError):
    """Enrollment produced fewer transformed bits than requested."""

    def __init__(self, requested: int, available: int):
        self.requested = requested
        self.available = available
        super().__init__(f"requested {requested} bits but only {available} are available")


# mask file parsing

class MaskFormatError(FingerprintError, ValueError):
    pass


class BadMagic(MaskFormatError):
    pass


class BadVersion(MaskFormatError):
    pass


class NonMonotonicOffsets(MaskFormatError):
    pass


class TruncatedMask(MaskFormatError):
    pass


# dataset ingestion

class DatasetError(FingerprintError):
    pass


class MalformedManifest(DatasetError, ValueError):
    pass


class MissingDumpFile(DatasetError, FileNotFoundError):
    pass


class SizeMismatch(DatasetError, ValueError):
    def __init__(self, path, expected: int, actual: int):
        self.path = path
        self.expected = expected
        self.actual = actual
        super().__init__(f"{path}: expected {expected} bytes, found {actual}")


class InsufficientData(DatasetError):
    pass


# attestation

class EnrollmentConflict(FingerprintError):
    pass


class TransportTimeout(FingerprintError, TimeoutError):
    pass


class ProtocolError(FingerprintError):
    pass
