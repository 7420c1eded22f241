"""Exception hierarchy shared by every stage of the pipeline."""


class FingerprintError(Exception):
    """Base class for all errors raised by :mod:`fporient`."""


class InvalidParameter(FingerprintError, ValueError):
    pass


class DimensionMismatch(FingerprintError, ValueError):
    pass


class EmptyForeground(FingerprintError):
    """Segmentation produced a mask with no true pixels."""


class EmptyMask(FingerprintError):
    pass


class NoReliableSegments(FingerprintError):
    """Every period-estimation segment failed the reliability test."""


class OutOfBounds(FingerprintError):
    pass


class DegenerateWeights(FingerprintError):
    """The normalising sum of a circle-weight family vanished."""


class ZeroAnchor(FingerprintError):
    pass


class DegenerateField(FingerprintError):
    pass


class IterationCapExceeded(FingerprintError):
    """Iterative smoothing hit its iteration cap before the mask emptied."""

    def __init__(self, message, field=None, iterations=0):
        super().__init__(message)
        self.field = field
        self.iterations = iterations


class FieldFormatError(FingerprintError):
    pass


class BadMagic(FieldFormatError):
    pass


class TruncatedFile(FieldFormatError):
    pass


class DimensionOverflow(FieldFormatError):
    pass


class ImageFormatError(FingerprintError):
    pass
