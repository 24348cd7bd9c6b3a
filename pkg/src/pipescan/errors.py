"""Exception types raised across the package."""


class PipeScanError(Exception):
    """Base class for all package errors."""


class ConfigError(PipeScanError):
    """Invalid parameter or configuration file."""


# geometry
class NonConvergence(PipeScanError):
    pass


class BehindCamera(PipeScanError):
    pass


class NotRectified(PipeScanError):
    pass


class ZeroDisparity(PipeScanError):
    pass


# scene
class OutOfBore(PipeScanError):
    pass


# ring extraction
class EmptyMask(PipeScanError):
    pass


class NoCircle(PipeScanError):
    pass


# profiling
class TooSparse(PipeScanError):
    pass


class RowOutOfImage(PipeScanError):
    pass


class DegenerateRing(PipeScanError):
    pass


class DegenerateBaseline(PipeScanError):
    pass


# map building
class NonMonotoneOdometry(PipeScanError):
    pass


class AngularMismatch(PipeScanError):
    pass


class IoFailure(PipeScanError, OSError):
    pass


class ManifestError(PipeScanError):
    """Scan directory is missing or has a malformed manifest."""
