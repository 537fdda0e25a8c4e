"""Exception types raised by the public operators."""


class StereopropError(Exception):
    """Base class for all package-specific errors."""


class ShapeMismatch(StereopropError, ValueError):
    """Operands do not have compatible dimensions."""


class TooSmall(StereopropError, ValueError):
    """Input grid is below the minimum size required by the operator."""


class AllInvalidColumn(StereopropError, ValueError):
    """Every disparity candidate at some pixel carries the invalid sentinel."""


class EmptyValidSet(StereopropError, ValueError):
    """A masked reduction was requested over zero valid pixels."""


class DegenerateSum(StereopropError, ValueError):
    """A vector sum underflowed and cannot be normalized."""


class NegativeDisparity(StereopropError, ValueError):
    """A plane specification produces disparities below zero."""


class BadChannelCount(StereopropError, ValueError):
    """Channel count does not correspond to an odd square window."""


# --- file format errors -------------------------------------------------

class MalformedHeader(StereopropError, ValueError):
    """File header does not follow the expected format."""


class TruncatedPayload(StereopropError, ValueError):
    """File payload is shorter than the header promises."""


class ZeroScale(StereopropError, ValueError):
    """PFM scale factor is zero, which encodes neither byte order."""


class UnsupportedChannelCount(StereopropError, ValueError):
    """Only 1- and 3-channel grids can be written to this format."""


class NotSixteenBit(StereopropError, ValueError):
    """PNG sample depth is not the required 16 bits per channel."""


class DecodeError(StereopropError, ValueError):
    """Byte stream could not be decoded as an image."""
