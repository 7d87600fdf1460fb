"""Exception hierarchy shared by every module in the package."""


class GhostSimError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParameter(GhostSimError):
    """A scalar argument is outside its physical or numeric domain."""


class GridTooSmall(GhostSimError):
    """Grid extent cannot hold the requested structure without clipping."""


class GridTooLarge(GhostSimError):
    """Grid exceeds a hard cost guard (brute-force oracle paths)."""


class GeometryMismatch(GhostSimError):
    """Physical layout conflict, e.g. a mask or object wider than the grid."""


class GridMismatch(GhostSimError):
    """Two fields or arrays live on different sampling grids."""


class PlaneMismatch(GhostSimError):
    """Operands sit at incompatible z planes."""


class SamplingViolation(GhostSimError):
    """Propagation kernel would be undersampled at this distance."""


class UnsupportedFormat(GhostSimError):
    """File content is not one of the formats this package reads."""


class EmptyImage(GhostSimError):
    """Raster or object has no transmissive support."""


class InsufficientSamples(GhostSimError):
    """Not enough measurement realizations for the requested statistic."""


class InsufficientData(GhostSimError):
    """Estimator input too small for a meaningful result."""


class DetectorKindMismatch(GhostSimError):
    """Records from one detector kind fed to a reconstruction that needs another."""


class DegenerateInput(GhostSimError):
    """Input is constant or otherwise carries no usable signal."""


class ShapeMismatch(GhostSimError):
    """Array shape disagrees with the grid or with a partner array."""


class NonFiniteInput(GhostSimError):
    """NaN or Inf where finite values are required."""


class FingerprintMismatch(GhostSimError):
    """Two results come from different experiment configurations."""
