"""Exception hierarchy shared across the toolkit.

Everything derives from ConvArrangeError so callers (and the CLI) can catch
one base class. FormatError groups the byte-level failures raised while
parsing archives, checkpoints, and dataset files.
"""


class ConvArrangeError(Exception):
    pass


class FormatError(ConvArrangeError):
    """A byte stream does not conform to its declared on-disk format."""


class BadMagic(FormatError):
    pass


class HeaderParse(FormatError):
    pass


class UnsupportedDtype(FormatError):
    pass


class TruncatedPayload(FormatError):
    pass


class BadZip(FormatError):
    pass


class ShapeMismatch(FormatError):
    pass


class CorruptManifest(FormatError):
    pass


class Truncated(FormatError):
    pass


class DimMismatch(FormatError):
    pass


class MissingEpoch(ConvArrangeError):
    pass


class MissingLayer(ConvArrangeError):
    pass


class LabelOutOfRange(ConvArrangeError):
    pass


class DegenerateGeometry(ConvArrangeError):
    pass


class RowOutOfRange(ConvArrangeError):
    pass


class BudgetExceeded(ConvArrangeError):
    pass


class UnsupportedGeometry(ConvArrangeError):
    pass


class ZeroFilter(ConvArrangeError):
    """A filter with zero Frobenius norm has no projection direction."""

    def __init__(self, message, filter_index=None):
        super().__init__(message)
        self.filter_index = filter_index


class EmptyLayer(ConvArrangeError):
    pass


class ZeroSum(ConvArrangeError):
    pass


class StaleCache(ConvArrangeError):
    pass


class NonFiniteLoss(ConvArrangeError):
    pass
