"""Exception hierarchy shared across the toolkit.

Everything raised on bad data derives from Raw2RawError so the CLI can map
data problems to a single exit code; genuine usage errors (bad flags) are
handled by the argument parser instead.
"""


class Raw2RawError(Exception):
    """Base class for all data and configuration errors."""


class MetadataError(Raw2RawError):
    """Sidecar metadata is missing a field or is inconsistent."""


class CorruptPayloadError(Raw2RawError):
    """Pixel payload disagrees with its metadata (size, bit depth)."""


class DegenerateRangeError(Raw2RawError):
    """black_level equals white_level; normalization undefined."""


class ShapeError(Raw2RawError):
    """Array shape or channel count does not match the contract."""


class GridError(Raw2RawError):
    """Spectral wavelength grids do not match."""


class SingularFitError(Raw2RawError):
    """Least-squares design matrix is rank deficient."""


class BoundsError(Raw2RawError):
    """Patch coordinates fall outside the image."""


class ConfigError(Raw2RawError):
    """Invalid configuration value or combination."""


class NumericError(Raw2RawError):
    """Non-finite values where finite ones are required."""


class DegenerateIlluminantError(Raw2RawError):
    """Illuminant estimate has zero norm or a zero component."""
