"""Exception hierarchy shared by every via_inspector module.

Errors fall in two families. :class:`InputError` covers malformed or
inconsistent inputs (CLI exit code 1) and :class:`NumericalError` covers
inputs that are well formed but numerically unusable (CLI exit code 2).
"""


class ViaInspectorError(Exception):
    """Base class of all errors raised by via_inspector."""


class InputError(ViaInspectorError, ValueError):
    """Malformed, inconsistent or out-of-range input."""


class NumericalError(ViaInspectorError, ArithmeticError):
    """Well-formed input that cannot be processed numerically."""


# Input errors


class ZeroVector(InputError):
    """A light position vector has (near) zero length."""


class BelowPlane(InputError):
    """A light sits on or below the wafer plane (z <= 0)."""


class ShapeMismatch(InputError):
    """Array shapes or counts disagree between related inputs."""


class TooFewImages(InputError):
    """Fewer than three images were supplied to photometric stereo."""


class EmptyRaster(InputError):
    """A raster with zero rows or columns was supplied."""


class TooFewPoints(InputError):
    """Fewer than three points were supplied to a circle operation."""


class LengthMismatch(InputError):
    """Measured and reference lists have different lengths."""


class InvalidNA(InputError):
    """Numerical aperture outside (0, immersion_index)."""


class InvalidIndex(InputError):
    """Refractive index does not exceed the exit medium index."""


class NonpositiveOffset(InputError):
    """Lateral light offset is not strictly positive."""


class OverlappingVias(InputError):
    """Two vias of a synthetic scene overlap."""


class DimensionMismatch(InputError):
    """Image files of a stack have different dimensions."""


class MalformedHeader(InputError):
    """A file header (PGM, FDM1 or CSV) could not be parsed."""


class UnsupportedMaxval(InputError):
    """A PGM maxval is outside 1..65535."""


class BadMagic(InputError):
    """A depth map file does not start with the FDM1 magic."""


class TruncatedPayload(InputError):
    """A binary payload is shorter than its header announces."""


class InvalidParameter(InputError):
    """A numeric parameter violates its documented range."""


# Numerical errors


class RankDeficientLights(NumericalError):
    """The light direction matrix does not have rank 3."""


class DegenerateFit(NumericalError):
    """A plane fit was requested on collinear pixels."""


class DegenerateWeights(NumericalError):
    """All leveling weights in a window vanished."""


class CollinearPoints(NumericalError):
    """Circle fit requested on collinear points."""


class NoContour(NumericalError):
    """No iso contour exists at the requested level."""


class OpenContourOnly(NumericalError):
    """Only open contours (clipped by the raster border) exist at the level."""


class NoVia(NumericalError):
    """The depth map has no depth range above its noise floor."""
